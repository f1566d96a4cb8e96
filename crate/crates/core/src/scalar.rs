//! Scalar invariance: `f = 1·φ` is kept when `d/dw L_e(w·φ)` vanishes at
//! `w = 1` in every training environment.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::env::{shared_space, two_bit_env, Environment, OutcomeSpace};
use crate::error::{Error, Result};
use crate::full::select_min_loss;
use crate::newton::{solve_all, EquationSystem, SolverDiagnostics, SolverOptions};
use crate::risk::{canonical_cmp, Loss, Predictor};

/// `Σ_{x,y} P_e(x,y)·ℓ'(φ(x), y)·φ(x)`.
pub fn scalar_gradient(phi: &Predictor, e: &Environment, loss: Loss) -> Result<f64> {
    if phi.space().as_ref() != e.space().as_ref() {
        return Err(Error::SpaceMismatch);
    }
    loss.check_space(e.space())?;
    let ys = e.space().y_points();
    let mut acc = 0.0;
    for (i, &f) in phi.values().iter().enumerate() {
        for (p, &y) in e.row(i).iter().zip(ys) {
            if *p != 0.0 {
                acc += p * loss.d1(f, y) * f;
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientResidual {
    pub per_env: Vec<f64>,
    pub max_abs: f64,
    pub points: usize,
    pub envs: usize,
}

pub fn gradient_residual(
    phi: &Predictor,
    envs: &[Environment],
    loss: Loss,
) -> Result<GradientResidual> {
    let per_env = envs
        .iter()
        .map(|e| scalar_gradient(phi, e, loss))
        .collect::<Result<Vec<_>>>()?;
    let max_abs = per_env.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(GradientResidual {
        max_abs,
        points: phi.space().len_x(),
        envs: envs.len(),
        per_env,
    })
}

/// Which representations `φ` are searched over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    /// One free value per input point.
    Unrestricted,
    /// `φ(−x) = −φ(x)`: one value per `{x, −x}` pair, zero on self-negating points.
    Odd,
    /// `φ(x) = Σ_j w_j x_j`.
    Linear,
}

impl Restriction {
    pub fn name(self) -> &'static str {
        match self {
            Restriction::Unrestricted => "unrestricted",
            Restriction::Odd => "odd",
            Restriction::Linear => "linear",
        }
    }

    /// Matrix `B` (`|X| × k`) with `φ = B·v` for reduced coordinates `v`.
    pub fn basis(self, space: &OutcomeSpace) -> Result<DMatrix<f64>> {
        let n = space.len_x();
        match self {
            Restriction::Unrestricted => Ok(DMatrix::identity(n, n)),
            Restriction::Odd => {
                if !space.is_sign_symmetric() {
                    return Err(Error::Restriction {
                        restriction: "odd",
                        reason: "the input space is not closed under negation".into(),
                    });
                }
                let reps: Vec<(usize, usize)> = (0..n)
                    .filter_map(|i| {
                        let j = space.negation(i)?;
                        (i < j).then_some((i, j))
                    })
                    .collect();
                let mut b = DMatrix::zeros(n, reps.len());
                for (k, &(i, j)) in reps.iter().enumerate() {
                    b[(i, k)] = 1.0;
                    b[(j, k)] = -1.0;
                }
                Ok(b)
            }
            Restriction::Linear => {
                let d = space.dim();
                Ok(DMatrix::from_fn(n, d, |i, j| {
                    f64::from(space.x_points()[i][j])
                }))
            }
        }
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Restriction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unrestricted" | "full" => Ok(Restriction::Unrestricted),
            "odd" => Ok(Restriction::Odd),
            "linear" | "lin" => Ok(Restriction::Linear),
            other => Err(Error::Contract(format!(
                "unknown restriction '{other}' (expected unrestricted, odd or linear)"
            ))),
        }
    }
}

/// Losses and scalar gradients as functions of reduced coordinates, with
/// analytic first and second derivatives.
pub(crate) struct ReducedModel {
    pub space: Arc<OutcomeSpace>,
    pub basis: DMatrix<f64>,
    pub loss: Loss,
    /// Per environment, per input point: `(mass, label)` pairs with mass > 0.
    masses: Vec<Vec<Vec<(f64, f64)>>>,
}

impl ReducedModel {
    pub fn new(envs: &[Environment], loss: Loss, restriction: Restriction) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::Contract(
                "at least one environment is required".into(),
            ));
        }
        let space = shared_space(envs)?;
        loss.check_space(&space)?;
        let basis = restriction.basis(&space)?;
        let ys = space.y_points();
        let masses = envs
            .iter()
            .map(|e| {
                (0..space.len_x())
                    .map(|i| {
                        e.row(i)
                            .iter()
                            .zip(ys)
                            .filter(|(p, _)| **p > 0.0)
                            .map(|(&p, &y)| (p, y))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(ReducedModel {
            space,
            basis,
            loss,
            masses,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn envs(&self) -> usize {
        self.masses.len()
    }

    pub fn values(&self, v: &[f64]) -> DVector<f64> {
        &self.basis * DVector::from_column_slice(v)
    }

    pub fn predictor(&self, v: &[f64]) -> Predictor {
        Predictor::new(self.space.clone(), self.values(v).as_slice().to_vec())
            .expect("finite reduced coordinates")
    }

    /// Per-point sums `Σ_y P(x,y)·k(φ_x, y)` for environment `e`.
    fn pointwise<F: Fn(f64, f64) -> f64>(
        &self,
        e: usize,
        phi: &DVector<f64>,
        k: F,
    ) -> DVector<f64> {
        DVector::from_iterator(
            phi.len(),
            self.masses[e]
                .iter()
                .zip(phi.iter())
                .map(|(row, &f)| row.iter().map(|&(p, y)| p * k(f, y)).sum::<f64>()),
        )
    }

    pub fn loss_value(&self, e: usize, phi: &DVector<f64>) -> f64 {
        self.pointwise(e, phi, |f, y| self.loss.value(f, y)).sum()
    }

    pub fn loss_grad(&self, e: usize, phi: &DVector<f64>) -> DVector<f64> {
        self.basis
            .tr_mul(&self.pointwise(e, phi, |f, y| self.loss.d1(f, y)))
    }

    pub fn loss_hess(&self, e: usize, phi: &DVector<f64>) -> DMatrix<f64> {
        let w = self.pointwise(e, phi, |f, y| self.loss.d2(f, y));
        weighted_gram(&self.basis, &w)
    }

    /// Scalar gradient `g_e = Σ P·ℓ'(φ)·φ`.
    pub fn grad_value(&self, e: usize, phi: &DVector<f64>) -> f64 {
        self.pointwise(e, phi, |f, y| f * self.loss.d1(f, y)).sum()
    }

    /// `∇_v g_e`, using `(fℓ')' = ℓ' + fℓ''`.
    pub fn grad_grad(&self, e: usize, phi: &DVector<f64>) -> DVector<f64> {
        let w = self.pointwise(e, phi, |f, y| self.loss.d1(f, y) + f * self.loss.d2(f, y));
        self.basis.tr_mul(&w)
    }

    /// `∇²_v g_e`, using `(fℓ')'' = 2ℓ'' + fℓ'''`.
    pub fn grad_hess(&self, e: usize, phi: &DVector<f64>) -> DMatrix<f64> {
        let w = self.pointwise(e, phi, |f, y| {
            2.0 * self.loss.d2(f, y) + f * self.loss.d3(f, y)
        });
        weighted_gram(&self.basis, &w)
    }
}

/// `Bᵀ diag(w) B`.
fn weighted_gram(b: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (mut row, &wi) in scaled.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    b.tr_mul(&scaled)
}

/// `v ↦ (g_e(B·v))_e`.
struct GradientSystem<'a>(&'a ReducedModel);

impl EquationSystem for GradientSystem<'_> {
    fn unknowns(&self) -> usize {
        self.0.dim()
    }

    fn equations(&self) -> usize {
        self.0.envs()
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let phi = self.0.values(v);
        (0..self.0.envs())
            .map(|e| self.0.grad_value(e, &phi))
            .collect()
    }

    fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let phi = self.0.values(v);
        let mut j = DMatrix::zeros(self.0.envs(), self.0.dim());
        for e in 0..self.0.envs() {
            j.set_row(e, &self.0.grad_grad(e, &phi).transpose());
        }
        j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSolution {
    pub predictor: Predictor,
    /// Reduced coordinates under the restriction.
    pub coords: Vec<f64>,
    pub residual: GradientResidual,
    pub basin: usize,
    pub jacobian_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub solutions: Vec<ScalarSolution>,
    pub restriction: Restriction,
    pub loss: Loss,
    pub diagnostics: SolverDiagnostics,
}

impl SolutionSet {
    pub fn predictors(&self) -> impl Iterator<Item = &Predictor> {
        self.solutions.iter().map(|s| &s.predictor)
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn contains(&self, f: &Predictor, tol: f64) -> bool {
        self.predictors().any(|g| g.max_distance(f) <= tol)
    }

    /// True when the system has fewer equations than unknowns or some root
    /// has a rank-deficient Jacobian, so roots need not be isolated.
    pub fn may_be_continuum(&self) -> bool {
        self.diagnostics.equations < self.diagnostics.unknowns || self.diagnostics.non_isolated > 0
    }
}

/// All simultaneous roots of the scalar-gradient conditions found by
/// multi-start Newton under the default start policy.
pub fn solve_scalar_invariant(
    envs: &[Environment],
    loss: Loss,
    restriction: Restriction,
    seed: u64,
) -> Result<SolutionSet> {
    solve_scalar_invariant_with(envs, loss, restriction, &SolverOptions::with_seed(seed))
}

pub fn solve_scalar_invariant_with(
    envs: &[Environment],
    loss: Loss,
    restriction: Restriction,
    opts: &SolverOptions,
) -> Result<SolutionSet> {
    let model = ReducedModel::new(envs, loss, restriction)?;
    let (roots, diagnostics) = solve_all(&GradientSystem(&model), opts);
    let solutions = roots
        .into_iter()
        .map(|r| {
            let predictor = model.predictor(&r.x);
            let residual = gradient_residual(&predictor, envs, loss)?;
            Ok(ScalarSolution {
                predictor,
                coords: r.x,
                residual,
                basin: r.basin,
                jacobian_rank: r.jacobian_rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionSet {
        solutions,
        restriction,
        loss,
        diagnostics,
    })
}

/// The scalar-invariant solution with the smallest summed training loss;
/// ties go to the lexicographically smallest value table.
pub fn irm_s_select(
    envs: &[Environment],
    loss: Loss,
    restriction: Restriction,
    seed: u64,
) -> Result<Predictor> {
    let set = solve_scalar_invariant(envs, loss, restriction, seed)?;
    select_min_loss(set.predictors(), envs, loss)?.ok_or(Error::NoScalarInvariantPredictor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormSolutions {
    /// Odd square-loss solutions on the two-bit space, canonically ordered.
    pub solutions: Vec<Predictor>,
    /// Whether the two solutions using `x2` exist and are distinct from `a·x1`.
    pub extra_branch: bool,
    /// `½ − 1/(4a²)`; the extra branch needs it positive.
    pub discriminant: f64,
}

/// Odd square-loss solutions on `E_α` written as `w1·x1 + w2·x2`: the
/// conditions reduce to `w1² + w2² = a·w1` and `(2a·w1 − 1)·w2 = 0` with
/// `a = 1 − 2α`.
pub fn two_bit_odd_closed_form(alpha: f64) -> Result<ClosedFormSolutions> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            name: "alpha",
            value: alpha,
            domain: "(0, 1)",
        });
    }
    if alpha == 0.5 {
        return Err(Error::Degenerate);
    }
    let space = OutcomeSpace::two_bit();
    let a = 1.0 - 2.0 * alpha;
    let lin = |w1: f64, w2: f64| Predictor::linear(space.clone(), &[w1, w2], 0.0);
    let mut solutions = vec![lin(0.0, 0.0)?, lin(a, 0.0)?];
    let discriminant = 0.5 - 1.0 / (4.0 * a * a);
    if discriminant > 0.0 {
        let w1 = 1.0 / (2.0 * a);
        let w2 = discriminant.sqrt();
        for cand in [lin(w1, w2)?, lin(w1, -w2)?] {
            if solutions.iter().all(|s| s.max_distance(&cand) > 1e-6) {
                solutions.push(cand);
            }
        }
    }
    let extra_branch = solutions.len() == 4;
    solutions.sort_by(|p, q| canonical_cmp(p.values(), q.values()));
    Ok(ClosedFormSolutions {
        solutions,
        extra_branch,
        discriminant,
    })
}

/// `(F, G)` with `scalar_gradient(φ, (α, β)) = F + β·G` for every `β`.
pub fn affine_beta_decomposition(phi: &Predictor, alpha: f64, loss: Loss) -> Result<(f64, f64)> {
    if phi.space().as_ref() != OutcomeSpace::two_bit().as_ref() {
        return Err(Error::SpaceMismatch);
    }
    let eps = 1e-3;
    let at = |beta: f64| -> Result<f64> { scalar_gradient(phi, &two_bit_env(alpha, beta)?, loss) };
    let g0 = at(eps)?;
    let g1 = at(1.0 - eps)?;
    let g = (g1 - g0) / (1.0 - 2.0 * eps);
    let f = g0 - eps * g;
    let tol = 1e-10 * (1.0 + f.abs() + g.abs());
    for beta in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let r = at(beta)? - (f + beta * g);
        if r.abs() > tol {
            return Err(Error::Consistency(format!(
                "scalar gradient is not affine in beta: residual {r:e} at beta = {beta}"
            )));
        }
    }
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::population_loss;

    fn pair(alpha: f64, b1: f64, b2: f64) -> Vec<Environment> {
        vec![
            two_bit_env(alpha, b1).unwrap(),
            two_bit_env(alpha, b2).unwrap(),
        ]
    }

    fn odd(u: f64, v: f64) -> Predictor {
        Predictor::new(OutcomeSpace::two_bit(), vec![u, v, -v, -u]).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let s = OutcomeSpace::two_bit();
        let e = two_bit_env(0.25, 0.1).unwrap();
        let x2 = Predictor::linear(s.clone(), &[0.0, 1.0], 0.0).unwrap();
        assert!((scalar_gradient(&x2, &e, Loss::Square).unwrap() - 0.2).abs() < 1e-12);
        let irm = Predictor::linear(s.clone(), &[0.5, 0.0], 0.0).unwrap();
        assert!(scalar_gradient(&irm, &e, Loss::Square).unwrap().abs() < 1e-12);
        for loss in [Loss::Square, Loss::Logistic] {
            assert_eq!(
                scalar_gradient(&Predictor::zero(s.clone()), &e, loss).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let e = two_bit_env(0.2, 0.35).unwrap();
        let phi = odd(1.3, -0.4);
        for loss in [Loss::Square, Loss::Logistic] {
            let h = 1e-5;
            let lp = population_loss(&phi.scaled(1.0 + h), &e, loss).unwrap();
            let lm = population_loss(&phi.scaled(1.0 - h), &e, loss).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - scalar_gradient(&phi, &e, loss).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn odd_basis_pairs_negations() {
        let b = Restriction::Odd.basis(&OutcomeSpace::two_bit()).unwrap();
        assert_eq!(b.shape(), (4, 2));
        assert_eq!(b.column(0).as_slice(), &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(b.column(1).as_slice(), &[0.0, 1.0, -1.0, 0.0]);
        let b = Restriction::Odd
            .basis(&OutcomeSpace::ternary_pair())
            .unwrap();
        assert_eq!(b.shape(), (9, 4));
        let lin = Restriction::Linear.basis(&OutcomeSpace::two_bit()).unwrap();
        assert_eq!(
            lin.row(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -1.0]
        );
    }

    #[test]
    fn odd_square_solutions_for_alpha_01() {
        let set = solve_scalar_invariant(&pair(0.1, 0.2, 0.25), Loss::Square, Restriction::Odd, 0)
            .unwrap();
        assert_eq!(set.len(), 4, "{:?}", set.diagnostics);
        let expect = [
            odd(0.0, 0.0),
            odd(0.8, 0.8),
            odd(0.9557, 0.2943),
            odd(0.2943, 0.9557),
        ];
        for f in &expect {
            assert!(set.contains(f, 1e-3), "{f}");
        }
        for s in &set.solutions {
            assert!(s.residual.max_abs <= 1e-10);
        }
        assert!(!set.may_be_continuum());
    }

    #[test]
    fn odd_logistic_solutions_for_alpha_005() {
        let set =
            solve_scalar_invariant(&pair(0.05, 0.1, 0.2), Loss::Logistic, Restriction::Odd, 0)
                .unwrap();
        assert_eq!(set.len(), 4, "{:?}", set.diagnostics);
        assert!(set.contains(&odd(4.9847, 0.9041), 1e-3));
        assert!(set.contains(&odd(2.9444, 2.9444), 1e-3));
    }

    #[test]
    fn no_extra_solutions_for_alpha_025() {
        let set = solve_scalar_invariant(&pair(0.25, 0.1, 0.2), Loss::Square, Restriction::Odd, 0)
            .unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&odd(0.5, 0.5), 1e-9));
    }

    #[test]
    fn closed_form_values() {
        let cf = two_bit_odd_closed_form(0.1).unwrap();
        assert!(cf.extra_branch);
        assert_eq!(cf.solutions.len(), 4);
        let w2 = (0.5f64 - 1.0 / 2.56).sqrt();
        assert!((w2 - 0.330719).abs() < 1e-6);
        let f1 = Predictor::linear(OutcomeSpace::two_bit(), &[0.625, w2], 0.0).unwrap();
        assert!(cf.solutions.iter().any(|s| s.max_distance(&f1) < 1e-12));
        assert!(f1.max_distance(&odd(0.9557, 0.2943)) < 1e-4);

        let cf = two_bit_odd_closed_form(0.25).unwrap();
        assert!(!cf.extra_branch);
        assert_eq!(cf.solutions.len(), 2);

        let edge = 0.5 - 1.0 / (2.0 * 2f64.sqrt());
        let cf = two_bit_odd_closed_form(edge).unwrap();
        assert!(cf.discriminant.abs() < 1e-12);
        assert_eq!(cf.solutions.len(), 2);

        assert_eq!(two_bit_odd_closed_form(0.5), Err(Error::Degenerate));
        assert!(two_bit_odd_closed_form(0.0).is_err());
    }

    #[test]
    fn closed_form_matches_solver_for_large_alpha() {
        let cf = two_bit_odd_closed_form(0.9).unwrap();
        let set = solve_scalar_invariant(&pair(0.9, 0.3, 0.6), Loss::Square, Restriction::Odd, 3)
            .unwrap();
        assert_eq!(set.len(), cf.solutions.len());
        for f in &cf.solutions {
            assert!(set.contains(f, 1e-6));
        }
    }

    #[test]
    fn affine_decomposition_examples() {
        let s = OutcomeSpace::two_bit();
        let (f, g) = affine_beta_decomposition(
            &Predictor::linear(s.clone(), &[0.5, 0.0], 0.0).unwrap(),
            0.25,
            Loss::Square,
        )
        .unwrap();
        assert!(f.abs() < 1e-12 && g.abs() < 1e-12);
        let (f, g) = affine_beta_decomposition(
            &Predictor::linear(s.clone(), &[0.0, 1.0], 0.0).unwrap(),
            0.25,
            Loss::Square,
        )
        .unwrap();
        assert!(f.abs() < 1e-12 && (g - 2.0).abs() < 1e-12);
        let (f, g) = affine_beta_decomposition(&odd(1.1, -0.7), 0.3, Loss::Logistic).unwrap();
        assert!(f.is_finite() && g.is_finite());
    }

    #[test]
    fn selection_examples() {
        let f = irm_s_select(&pair(0.1, 0.2, 0.25), Loss::Square, Restriction::Odd, 0).unwrap();
        assert!(f.max_distance(&odd(0.9557, 0.2943)) < 1e-3);
        let f = irm_s_select(&pair(0.25, 0.1, 0.2), Loss::Square, Restriction::Odd, 0).unwrap();
        assert!(f.max_distance(&odd(0.5, 0.5)) < 1e-9);
        let f = irm_s_select(&pair(0.1, 0.4, 0.6), Loss::Square, Restriction::Odd, 0).unwrap();
        assert!(f.max_distance(&odd(0.8, 0.8)) < 1e-9);
    }

    #[test]
    fn perturbed_environments_have_no_scalar_solution_besides_zero() {
        let envs: Vec<Environment> = [(0.245, 0.105), (0.255, 0.195), (0.251, 0.302)]
            .iter()
            .map(|&(a, b)| two_bit_env(a, b).unwrap())
            .collect();
        let set = solve_scalar_invariant(&envs, Loss::Square, Restriction::Odd, 0).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.solutions[0].predictor.max_norm() < 1e-9);
    }

    #[test]
    fn odd_restriction_needs_symmetric_space() {
        let space = Arc::new(OutcomeSpace::new(vec![vec![0], vec![1]], vec![-1.0, 1.0]).unwrap());
        assert!(matches!(
            Restriction::Odd.basis(&space),
            Err(Error::Restriction { .. })
        ));
        assert_eq!("odd".parse::<Restriction>().unwrap(), Restriction::Odd);
        assert!("weird".parse::<Restriction>().is_err());
    }
}
