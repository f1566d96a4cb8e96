//! Invariant risk minimization over finite, discrete environments.
//!
//! Environments are explicit probability tables on a shared outcome space.
//! The crate checks which predictors are invariant, solves the scalar-gradient
//! conditions and traces the penalized IRMv1 objective.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod envfile;
pub mod error;
pub mod full;
pub mod irmv1;
pub mod newton;
pub mod partition;
pub mod risk;
pub mod scalar;

pub use env::{
    piecewise_pi_env, piecewise_pi_params, section4_env, section4_perturbation, shared_space,
    two_bit_env, Environment, EnvironmentFamily, FamilyParams, OutcomeSpace,
};
pub use envfile::{environments_to_json, load_environments, parse_environments, save_environments};
pub use error::{Error, Result};
pub use full::{
    default_tolerance, invariant_predictors_full, irm_select, is_invariant_partition,
    subset_invariance_scan, InvariantPredictorSet, SubsetRow,
};
pub use irmv1::{
    collapse_lambda, default_lambdas, irmv1_objective, irmv1_solve, lambda_path, Irmv1Solution,
    LambdaPathPoint,
};
pub use newton::{SolverDiagnostics, SolverOptions};
pub use partition::{bell_number, enumerate_partitions, Partition};
pub use risk::{
    conditional_mean, erm_solve, ood_sup_risk, pointwise_optimal, population_loss, sweep_losses,
    total_loss, FamilySweep, Loss, Predictor, SupRisk, SweepGrid,
};
pub use scalar::{
    affine_beta_decomposition, gradient_residual, irm_s_select, scalar_gradient,
    solve_scalar_invariant, two_bit_odd_closed_form, GradientResidual, Restriction, SolutionSet,
};
