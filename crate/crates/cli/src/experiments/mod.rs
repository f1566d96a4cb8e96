//! Reproducible experiments with embedded reference values.

mod families;
mod two_bit;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use irm_core::{two_bit_env, Environment, Predictor};
use serde::Serialize;

use crate::report::ExperimentReport;
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Overrides {
    pub seed: u64,
    /// Sample count for curve tables.
    pub grid: Option<usize>,
}

impl Overrides {
    fn grid_or(&self, default: usize) -> usize {
        self.grid.unwrap_or(default).max(2)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExperimentInfo {
    pub id: &'static str,
    pub anchor: &'static str,
    pub summary: &'static str,
    /// Number of published reference values the experiment checks.
    pub references: usize,
    #[serde(skip)]
    run: fn(&Overrides) -> Result<ExperimentReport>,
}

pub const EXPERIMENTS: &[ExperimentInfo] = &[
    ExperimentInfo {
        id: "motivating-025",
        anchor: "two-bit motivating example, alpha = 0.25",
        summary: "ERM and IRM predictors on {(0.25,0.1),(0.25,0.2)} and their losses at (0.25,0.9)",
        references: 11,
        run: two_bit::motivating,
    },
    ExperimentInfo {
        id: "failure-01",
        anchor: "two-bit failure mode, alpha = 0.1",
        summary: "ERM, IRM and scalar-IRM predictors and the 3x4 loss table",
        references: 25,
        run: two_bit::failure,
    },
    ExperimentInfo {
        id: "fig1-loci",
        anchor: "odd solution loci for square loss, alpha = 0.1",
        summary: "zero sets of the scalar gradient in the odd plane and their 4 common points",
        references: 17,
        run: two_bit::square_loci,
    },
    ExperimentInfo {
        id: "fig2-losses",
        anchor: "losses of the odd scalar-invariant predictors, square loss",
        summary: "loss against beta for f_0, f_irm, f_1, f_2 with the selection crossovers",
        references: 3,
        run: two_bit::square_losses,
    },
    ExperimentInfo {
        id: "fig3-path",
        anchor: "penalized objective path on {(0.1,0.2),(0.1,0.25)}",
        summary: "global minimizer for lambda in {0} and 2^0..2^20",
        references: 5,
        run: two_bit::failure_path,
    },
    ExperimentInfo {
        id: "fig5-noisy",
        anchor: "penalized objective on exact and perturbed training triples",
        summary: "lambda paths for the exact and noisy triples and the noisy collapse",
        references: 4,
        run: two_bit::noisy_path,
    },
    ExperimentInfo {
        id: "app-a3-logistic",
        anchor: "odd scalar-invariant predictors for logistic loss, alpha = 0.05",
        summary: "the four logistic solutions and the log(19) invariant coefficient",
        references: 17,
        run: two_bit::logistic_solutions,
    },
    ExperimentInfo {
        id: "fig6-loci",
        anchor: "odd solution loci for logistic loss, alpha = 0.05",
        summary: "zero sets of the logistic scalar gradient and their 4 common points",
        references: 9,
        run: two_bit::logistic_loci,
    },
    ExperimentInfo {
        id: "fig7-losses",
        anchor: "losses of the odd scalar-invariant predictors, logistic loss",
        summary: "logistic loss against beta for f_0, f_irm, f_1, f_2",
        references: 2,
        run: two_bit::logistic_losses,
    },
    ExperimentInfo {
        id: "sec4-prop2",
        anchor: "three-valued family: invariance does not pick the robust predictor",
        summary:
            "loss curves 0.47 and 0.47+0.09*theta and the IRM choice with negative training theta",
        references: 10,
        run: families::three_valued,
    },
    ExperimentInfo {
        id: "app-d-scan",
        anchor: "subset scan over {-1,0,1}^2",
        summary: "511 subsets, 37 with parameter-free conditional mean, 6 of them nonzero",
        references: 15,
        run: families::ternary_scan,
    },
    ExperimentInfo {
        id: "app-e-counterexample",
        anchor: "continuous piecewise-linear family",
        summary: "0.8*x1 is invariant for theta in (0, 1/4] and stops being invariant after",
        references: 5,
        run: families::piecewise,
    },
    ExperimentInfo {
        id: "app-b-table1",
        anchor: "subset table over {-1,1}^2",
        summary: "conditional means of all 15 subsets against their closed forms",
        references: 30,
        run: families::two_bit_subsets,
    },
];

pub fn find(id: &str) -> Option<&'static ExperimentInfo> {
    EXPERIMENTS.iter().find(|e| e.id == id)
}

pub fn ids() -> impl Iterator<Item = &'static str> {
    EXPERIMENTS.iter().map(|e| e.id)
}

/// Runs one experiment and, if `out_dir` is given, writes its tables and report there.
pub fn run_experiment(
    id: &str,
    overrides: &Overrides,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    let Some(info) = find(id) else {
        bail!(
            "unknown experiment `{id}`; expected one of: {}",
            ids().collect::<Vec<_>>().join(", ")
        );
    };
    let start = Instant::now();
    let mut report = (info.run)(overrides)?;
    report.wall_clock = start.elapsed();
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

pub fn manifest_table() -> Table {
    let mut t = Table::new("manifest", &["id", "anchor", "summary", "references"]);
    for e in EXPERIMENTS {
        t.push(vec![
            e.id.into(),
            e.anchor.into(),
            e.summary.into(),
            e.references.into(),
        ]);
    }
    t
}

pub(crate) fn two_bit_envs(alpha: f64, betas: &[f64]) -> Result<Vec<Environment>> {
    Ok(betas
        .iter()
        .map(|&b| two_bit_env(alpha, b))
        .collect::<irm_core::Result<Vec<_>>>()?)
}

/// One row per (predictor, input point).
pub(crate) fn predictor_table(name: &str, preds: &[(&str, &Predictor)]) -> Table {
    let mut t = Table::new(name, &["predictor", "x", "value"]);
    for (label, f) in preds {
        for (i, v) in f.values().iter().enumerate() {
            t.push(vec![
                Cell::from(*label),
                f.space().format_point(i).into(),
                (*v).into(),
            ]);
        }
    }
    t
}

/// Root of a sign-changing `f` on `[lo, hi]`.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return None;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
