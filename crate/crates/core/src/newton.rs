//! Multi-start damped Newton for small nonlinear systems.
//!
//! Steps use the SVD pseudo-inverse of the Jacobian, so square systems take
//! Newton steps, overdetermined ones take Gauss-Newton steps and
//! underdetermined ones take minimum-norm steps. Only starts whose residual
//! drops to the tolerance count as roots.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::risk::canonical_cmp;

/// Residuals and Jacobian of `r: R^n → R^m`.
pub trait EquationSystem: Sync {
    fn unknowns(&self) -> usize;
    fn equations(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    /// `m × n` matrix of partial derivatives.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub lattice_lo: f64,
    pub lattice_hi: f64,
    pub lattice_step: f64,
    /// Lattices larger than this are rebuilt with fewer points per axis.
    pub max_lattice_starts: usize,
    pub random_starts: usize,
    pub random_lo: f64,
    pub random_hi: f64,
    pub residual_tol: f64,
    pub dedup_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Iterates leaving `[-b, b]^n` are abandoned.
    pub bound: Option<f64>,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lattice_lo: -2.0,
            lattice_hi: 2.0,
            lattice_step: 0.25,
            max_lattice_starts: 100_000,
            random_starts: 200,
            random_lo: -3.0,
            random_hi: 3.0,
            residual_tol: 1e-10,
            dedup_tol: 1e-6,
            max_iterations: 200,
            max_halvings: 30,
            bound: None,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn with_seed(seed: u64) -> Self {
        SolverOptions {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub unknowns: usize,
    pub equations: usize,
    pub starts: usize,
    pub lattice_starts: usize,
    pub lattice_points_per_axis: usize,
    pub random_starts: usize,
    pub converged: usize,
    pub iterations: u64,
    pub dedup_merges: usize,
    pub stalled: usize,
    pub out_of_bounds: usize,
    /// Roots whose Jacobian has rank below the number of unknowns; such roots
    /// sit on a continuum or are degenerate.
    pub non_isolated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Root {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    /// Number of starts that converged to this root.
    pub basin: usize,
    pub jacobian_rank: usize,
}

impl Root {
    pub fn max_residual(&self) -> f64 {
        max_abs(&self.residual)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

enum Run {
    Converged(Vec<f64>, Vec<f64>, u64),
    Stalled(u64),
    OutOfBounds(u64),
}

fn newton<S: EquationSystem + ?Sized>(sys: &S, start: &[f64], opts: &SolverOptions) -> Run {
    let mut x = start.to_vec();
    let mut r = sys.residual(&x);
    let mut norm = norm2(&r);
    let mut iters = 0u64;
    for _ in 0..opts.max_iterations {
        if !norm.is_finite() {
            return Run::Stalled(iters);
        }
        if max_abs(&r) <= opts.residual_tol {
            return Run::Converged(x, r, iters);
        }
        iters += 1;
        let svd = sys.jacobian(&x).svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Run::Stalled(iters);
        }
        let rhs = -DVector::from_column_slice(&r);
        let Ok(step) = svd.solve(&rhs, smax * 1e-13) else {
            return Run::Stalled(iters);
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let rt = sys.residual(&trial);
            let nt = norm2(&rt);
            if nt < norm {
                accepted = Some((trial, rt, nt));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, rn, nn)) = accepted else {
            return Run::Stalled(iters);
        };
        if let Some(b) = opts.bound {
            if xn.iter().any(|v| v.abs() > b) {
                return Run::OutOfBounds(iters);
            }
        }
        x = xn;
        r = rn;
        norm = nn;
    }
    if max_abs(&r) <= opts.residual_tol {
        Run::Converged(x, r, iters)
    } else {
        Run::Stalled(iters)
    }
}

/// Lattice starts (possibly coarsened to respect the cap) followed by seeded
/// uniform draws.
pub fn start_points(n: usize, opts: &SolverOptions) -> (Vec<Vec<f64>>, usize) {
    let full = ((opts.lattice_hi - opts.lattice_lo) / opts.lattice_step).round() as usize + 1;
    let mut per_axis = full;
    while per_axis > 2 && (per_axis as f64).powi(n as i32) > opts.max_lattice_starts as f64 {
        per_axis -= 1;
    }
    let axis: Vec<f64> = if per_axis == full {
        (0..full)
            .map(|k| opts.lattice_lo + k as f64 * opts.lattice_step)
            .collect()
    } else {
        let h = (opts.lattice_hi - opts.lattice_lo) / (per_axis - 1) as f64;
        (0..per_axis)
            .map(|k| opts.lattice_lo + k as f64 * h)
            .collect()
    };
    let mut starts = Vec::new();
    if n > 0 {
        let total = per_axis.pow(n as u32);
        for mut idx in 0..total {
            let mut p = vec![0.0; n];
            for slot in p.iter_mut().rev() {
                *slot = axis[idx % per_axis];
                idx /= per_axis;
            }
            starts.push(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        starts.push(
            (0..n)
                .map(|_| rng.random_range(opts.random_lo..opts.random_hi))
                .collect(),
        );
    }
    (starts, per_axis)
}

/// Order-preserving map from `f64` to a sortable integer.
fn ord_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    if b < 0 {
        b ^ i64::MAX
    } else {
        b
    }
}

/// Runs every start, merges converged points within `dedup_tol` (first start
/// wins) and returns roots in canonical order.
pub fn solve_all<S: EquationSystem + ?Sized>(
    sys: &S,
    opts: &SolverOptions,
) -> (Vec<Root>, SolverDiagnostics) {
    let n = sys.unknowns();
    let (starts, per_axis) = start_points(n, opts);
    let runs: Vec<Run> = starts.par_iter().map(|s| newton(sys, s, opts)).collect();

    let mut diag = SolverDiagnostics {
        unknowns: n,
        equations: sys.equations(),
        starts: starts.len(),
        lattice_starts: starts.len() - opts.random_starts,
        lattice_points_per_axis: per_axis,
        random_starts: opts.random_starts,
        ..Default::default()
    };
    let mut roots: Vec<Root> = Vec::new();
    // first coordinate -> root indices, for windowed duplicate search
    let mut index: BTreeMap<(i64, usize), ()> = BTreeMap::new();
    for run in runs {
        match run {
            Run::Stalled(it) => {
                diag.iterations += it;
                diag.stalled += 1;
            }
            Run::OutOfBounds(it) => {
                diag.iterations += it;
                diag.out_of_bounds += 1;
            }
            Run::Converged(x, r, it) => {
                diag.iterations += it;
                diag.converged += 1;
                let first = x.first().copied().unwrap_or(0.0);
                let lo = (ord_key(first - opts.dedup_tol), 0);
                let hi = (ord_key(first + opts.dedup_tol), usize::MAX);
                let hit = index.range(lo..=hi).map(|(&(_, k), _)| k).find(|&k| {
                    roots[k]
                        .x
                        .iter()
                        .zip(&x)
                        .all(|(a, b)| (a - b).abs() <= opts.dedup_tol)
                });
                match hit {
                    Some(k) => {
                        roots[k].basin += 1;
                        diag.dedup_merges += 1;
                    }
                    None => {
                        index.insert((ord_key(first), roots.len()), ());
                        roots.push(Root {
                            x,
                            residual: r,
                            basin: 1,
                            jacobian_rank: 0,
                        });
                    }
                }
            }
        }
    }
    roots.par_iter_mut().for_each(|root| {
        let sv = sys.jacobian(&root.x).singular_values();
        let smax = sv.max();
        root.jacobian_rank = sv.iter().filter(|&&s| s > 1e-8 * smax.max(1.0)).count();
    });
    diag.non_isolated = roots.iter().filter(|r| r.jacobian_rank < n).count();
    roots.sort_by(|a, b| canonical_cmp(&a.x, &b.x));
    (roots, diag)
}
