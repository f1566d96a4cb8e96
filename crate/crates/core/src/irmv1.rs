//! The penalized objective `Σ_e L_e(φ) + λ·g_e(φ)²`, where `g_e` is the
//! scalar gradient. It is non-convex, so minimizers are found by enumerating
//! its stationary points and comparing objective values.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::newton::{solve_all, EquationSystem, SolverDiagnostics, SolverOptions};
use crate::risk::{canonical_cmp, population_loss, Loss, Predictor};
use crate::scalar::{scalar_gradient, ReducedModel, Restriction};

/// Default max-norm below which a path minimizer counts as collapsed to zero.
pub const COLLAPSE_NORM: f64 = 0.05;

pub fn irmv1_objective(
    phi: &Predictor,
    envs: &[Environment],
    lambda: f64,
    loss: Loss,
) -> Result<f64> {
    check_lambda(lambda)?;
    let mut acc = 0.0;
    for e in envs {
        let g = scalar_gradient(phi, e, loss)?;
        acc += population_loss(phi, e, loss)? + lambda * g * g;
    }
    Ok(acc)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "lambda",
            value: lambda,
            domain: "[0, inf)",
        })
    }
}

/// Gradient of the penalized objective in reduced coordinates, with its
/// Hessian `Σ_e [∇²L_e + 2λ(∇g_e ∇g_eᵀ + g_e ∇²g_e)]` as Jacobian.
struct StationarySystem<'a> {
    model: &'a ReducedModel,
    lambda: f64,
}

impl StationarySystem<'_> {
    fn objective(&self, v: &[f64]) -> f64 {
        let phi = self.model.values(v);
        (0..self.model.envs())
            .map(|e| {
                let g = self.model.grad_value(e, &phi);
                self.model.loss_value(e, &phi) + self.lambda * g * g
            })
            .sum()
    }
}

impl EquationSystem for StationarySystem<'_> {
    fn unknowns(&self) -> usize {
        self.model.dim()
    }

    fn equations(&self) -> usize {
        self.model.dim()
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let phi = self.model.values(v);
        let mut grad = DVector::zeros(self.model.dim());
        for e in 0..self.model.envs() {
            grad += self.model.loss_grad(e, &phi);
            let g = self.model.grad_value(e, &phi);
            grad += self.model.grad_grad(e, &phi) * (2.0 * self.lambda * g);
        }
        grad.as_slice().to_vec()
    }

    fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let phi = self.model.values(v);
        let k = self.model.dim();
        let mut h = DMatrix::zeros(k, k);
        for e in 0..self.model.envs() {
            h += self.model.loss_hess(e, &phi);
            let g = self.model.grad_value(e, &phi);
            let dg = self.model.grad_grad(e, &phi);
            h += (&dg * dg.transpose() + self.model.grad_hess(e, &phi) * g) * (2.0 * self.lambda);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub coords: Vec<f64>,
    pub objective: f64,
    pub basin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Irmv1Solution {
    pub predictor: Predictor,
    pub coords: Vec<f64>,
    pub objective: f64,
    /// Every stationary point found, canonically ordered.
    pub stationary: Vec<StationaryPoint>,
    pub diagnostics: SolverDiagnostics,
}

/// Solver settings for one `λ`: the residual tolerance scales with `1 + λ`
/// and logistic runs are confined to a box.
pub fn irmv1_options(lambda: f64, loss: Loss, seed: u64) -> SolverOptions {
    SolverOptions {
        residual_tol: 1e-10 * (1.0 + lambda),
        bound: (loss == Loss::Logistic).then_some(10.0),
        ..SolverOptions::with_seed(seed)
    }
}

/// Global minimizer of the penalized objective among its stationary points.
pub fn irmv1_solve(
    envs: &[Environment],
    lambda: f64,
    loss: Loss,
    restriction: Restriction,
    seed: u64,
) -> Result<Irmv1Solution> {
    check_lambda(lambda)?;
    let model = ReducedModel::new(envs, loss, restriction)?;
    let sys = StationarySystem {
        model: &model,
        lambda,
    };
    let (roots, diagnostics) = solve_all(&sys, &irmv1_options(lambda, loss, seed));
    let stationary: Vec<StationaryPoint> = roots
        .into_iter()
        .map(|r| StationaryPoint {
            objective: sys.objective(&r.x),
            coords: r.x,
            basin: r.basin,
        })
        .collect();
    let mut best: Option<&StationaryPoint> = None;
    for s in &stationary {
        best = match best {
            None => Some(s),
            Some(b) => {
                let tie = (s.objective - b.objective).abs() <= 1e-12 * (1.0 + b.objective.abs());
                let better = if tie {
                    canonical_cmp(&s.coords, &b.coords).is_lt()
                } else {
                    s.objective < b.objective
                };
                Some(if better { s } else { b })
            }
        };
    }
    let best = best.ok_or(Error::NoStationaryPoint)?.clone();
    Ok(Irmv1Solution {
        predictor: model.predictor(&best.coords),
        coords: best.coords,
        objective: best.objective,
        stationary,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPathPoint {
    pub lambda: f64,
    /// `log2(λ)`, with `λ = 0` placed at −1.
    pub log2_lambda: f64,
    pub minimizer: Predictor,
    pub objective: f64,
    /// Scalar gradient in each environment.
    pub residuals: Vec<f64>,
    pub losses: Vec<f64>,
    pub stationary_points: usize,
}

/// `{0} ∪ {2^k : k = 0..=20}`.
pub fn default_lambdas() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..=20).map(|k| f64::from(1u32 << k)))
        .collect()
}

pub fn log2_position(lambda: f64) -> f64 {
    if lambda == 0.0 {
        -1.0
    } else {
        lambda.log2()
    }
}

/// One global minimizer per `λ`, in the given ascending order.
pub fn lambda_path(
    envs: &[Environment],
    lambdas: &[f64],
    loss: Loss,
    restriction: Restriction,
    seed: u64,
) -> Result<Vec<LambdaPathPoint>> {
    for &l in lambdas {
        check_lambda(l)?;
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("lambdas must be sorted ascending".into()));
    }
    lambdas
        .par_iter()
        .map(|&lambda| {
            let sol = irmv1_solve(envs, lambda, loss, restriction, seed)?;
            let f = &sol.predictor;
            let residuals = envs
                .iter()
                .map(|e| scalar_gradient(f, e, loss))
                .collect::<Result<Vec<_>>>()?;
            let losses = envs
                .iter()
                .map(|e| population_loss(f, e, loss))
                .collect::<Result<Vec<_>>>()?;
            Ok(LambdaPathPoint {
                lambda,
                log2_lambda: log2_position(lambda),
                objective: sol.objective,
                stationary_points: sol.stationary.len(),
                minimizer: sol.predictor,
                residuals,
                losses,
            })
        })
        .collect()
}

/// Smallest `λ` on the path whose minimizer has max-norm below `threshold`.
pub fn collapse_lambda(path: &[LambdaPathPoint], threshold: f64) -> Option<f64> {
    path.iter()
        .find(|p| p.minimizer.max_norm() < threshold)
        .map(|p| p.lambda)
}
