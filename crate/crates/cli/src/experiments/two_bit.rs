//! Experiments on two-bit environments.

use std::f64::consts::PI;

use anyhow::{anyhow, Result};
use irm_core::{
    collapse_lambda, default_lambdas, default_tolerance, erm_solve, gradient_residual,
    invariant_predictors_full, irm_s_select, irm_select, lambda_path, population_loss,
    solve_scalar_invariant, two_bit_env, Environment, LambdaPathPoint, Loss, OutcomeSpace,
    Predictor, Restriction,
};
use serde_json::json;

use super::{bisect, predictor_table, two_bit_envs, Overrides};
use crate::report::{ExperimentReport, Origin};
use crate::table::{Cell, Table};

const MOTIVATING_ERM: [f64; 4] = [0.8889, -0.3077, 0.3077, -0.8889];
const MOTIVATING_IRM: [f64; 4] = [0.5, 0.5, -0.5, -0.5];
/// Test losses at (0.25, 0.9) for ERM, IRM and the zero predictor.
const MOTIVATING_TEST: [f64; 3] = [0.985, 0.375, 0.5];

const FAILURE_ERM: [f64; 4] = [0.9375, 0.4464, -0.4464, -0.9375];
const FAILURE_IRM: [f64; 4] = [0.8, 0.8, -0.8, -0.8];
const FAILURE_IRM_S: [f64; 4] = [0.9557, 0.2943, -0.2943, -0.9557];
/// Rows e1, e2, e_test; columns ERM, IRM, scalar IRM, zero.
const FAILURE_LOSSES: [[f64; 4]; 3] = [
    [0.15, 0.18, 0.15, 0.5],
    [0.16, 0.18, 0.17, 0.5],
    [0.28, 0.18, 0.38, 0.5],
];

/// Odd square-loss solutions on E_0.1: f_0, f_irm, f_1, f_2.
const SQUARE_ODD: [(&str, [f64; 4]); 4] = [
    ("f_0", [0.0, 0.0, 0.0, 0.0]),
    ("f_irm", [0.8, 0.8, -0.8, -0.8]),
    ("f_1", [0.9557, 0.2943, -0.2943, -0.9557]),
    ("f_2", [0.2943, 0.9557, -0.9557, -0.2943]),
];

/// Odd logistic-loss solutions on E_0.05.
const LOGISTIC_ODD: [(&str, [f64; 4]); 4] = [
    ("f_0", [0.0, 0.0, 0.0, 0.0]),
    ("f_irm", [2.9444, 2.9444, -2.9444, -2.9444]),
    ("f_1", [4.9847, 0.9041, -0.9041, -4.9847]),
    ("f_2", [0.9041, 4.9847, -4.9847, -0.90413]),
];

const NAMES: [&str; 4] = ["f_0", "f_irm", "f_1", "f_2"];

fn values_close(
    r: &mut ExperimentReport,
    label: &str,
    expected: &[f64],
    f: &Predictor,
    tol: f64,
    origin: Origin,
    loc: &str,
) {
    let space = f.space().clone();
    for (i, (&e, &a)) in expected.iter().zip(f.values()).enumerate() {
        r.close(
            &format!("{label}{}", space.format_point(i)),
            e,
            a,
            tol,
            origin,
            loc,
        );
    }
}

/// Names an odd two-bit predictor `w1·x1 + w2·x2` by its branch.
fn branch(f: &Predictor) -> &'static str {
    let v = f.values();
    let w2 = 0.5 * (v[0] - v[1]);
    if f.max_norm() < 1e-9 {
        "f_0"
    } else if w2.abs() < 1e-7 {
        "f_irm"
    } else if w2 > 0.0 {
        "f_1"
    } else {
        "f_2"
    }
}

/// Odd scalar-invariant solutions keyed by branch name, in `NAMES` order.
fn named_odd_solutions(
    envs: &[Environment],
    loss: Loss,
    seed: u64,
) -> Result<Vec<(&'static str, Predictor)>> {
    let set = solve_scalar_invariant(envs, loss, Restriction::Odd, seed)?;
    let mut out: Vec<(&'static str, Predictor)> =
        set.predictors().map(|f| (branch(f), f.clone())).collect();
    out.sort_by_key(|(n, _)| NAMES.iter().position(|m| m == n));
    Ok(out)
}

fn lookup<'a>(sols: &'a [(&'static str, Predictor)], name: &str) -> Result<&'a Predictor> {
    sols.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| f)
        .ok_or_else(|| anyhow!("solution {name} not found"))
}

fn loss_at(f: &Predictor, alpha: f64, beta: f64, loss: Loss) -> f64 {
    two_bit_env(alpha, beta)
        .and_then(|e| population_loss(f, &e, loss))
        .unwrap_or(f64::NAN)
}

pub(super) fn motivating(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "motivating example";
    let envs = two_bit_envs(0.25, &[0.1, 0.2])?;
    let test = two_bit_env(0.25, 0.9)?;
    let loss = Loss::Square;
    let erm = erm_solve(&envs, loss)?;
    let irm = irm_select(&envs, loss, default_tolerance(&envs))?;
    let irm_s = irm_s_select(&envs, loss, Restriction::Odd, o.seed)?;
    let zero = Predictor::zero(OutcomeSpace::two_bit());

    let mut r = ExperimentReport::new(
        "motivating-025",
        json!({"alpha": 0.25, "train_betas": [0.1, 0.2], "test_beta": 0.9, "loss": "square", "seed": o.seed}),
    );
    r.table(predictor_table(
        "predictors",
        &[("f_erm", &erm), ("f_irm", &irm), ("f_irm_s", &irm_s)],
    ));
    let mut losses = Table::new("test_losses", &["predictor", "beta", "loss"]);
    let mut test_losses = Vec::new();
    for (name, f) in [("f_erm", &erm), ("f_irm", &irm), ("f_0", &zero)] {
        let l = population_loss(f, &test, loss)?;
        test_losses.push(l);
        losses.push(vec![name.into(), 0.9.into(), l.into()]);
    }
    r.table(losses);

    values_close(
        &mut r,
        "f_erm",
        &MOTIVATING_ERM,
        &erm,
        1e-4,
        Origin::Published,
        &format!("{loc}, ERM table"),
    );
    values_close(
        &mut r,
        "f_irm",
        &MOTIVATING_IRM,
        &irm,
        1e-9,
        Origin::Published,
        &format!("{loc}, IRM table"),
    );
    for ((name, e), a) in ["L_test(f_erm)", "L_test(f_irm)", "L_test(f_0)"]
        .iter()
        .zip(MOTIVATING_TEST)
        .zip(&test_losses)
    {
        r.close(
            name,
            e,
            *a,
            1e-3,
            Origin::Published,
            &format!("{loc}, test losses at (0.25,0.9)"),
        );
    }
    r.close(
        "scalar IRM equals IRM",
        0.0,
        irm_s.max_distance(&irm),
        1e-6,
        Origin::Derived,
        &format!("{loc}, scalar relaxation learns the IRM predictor"),
    );
    let pooled = erm_oracle(&envs);
    r.close(
        "f_erm equals pooled conditional mean",
        0.0,
        erm.max_distance(&pooled),
        1e-12,
        Origin::Derived,
        "pooled mixture conditional mean",
    );
    Ok(r)
}

/// Square-loss ERM as the conditional mean of the equal-weight mixture, computed cell by cell.
fn erm_oracle(envs: &[Environment]) -> Predictor {
    let space = envs[0].space().clone();
    let values = (0..space.len_x())
        .map(|x| {
            let (mut num, mut den) = (0.0, 0.0);
            for e in envs {
                for (j, &y) in space.y_points().iter().enumerate() {
                    num += y * e.mass(x, j);
                    den += e.mass(x, j);
                }
            }
            num / den
        })
        .collect();
    Predictor::new(space, values).expect("finite")
}

pub(super) fn failure(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "failure mode";
    let betas = [0.2, 0.25];
    let envs = two_bit_envs(0.1, &betas)?;
    let loss = Loss::Square;
    let erm = erm_solve(&envs, loss)?;
    let irm = irm_select(&envs, loss, default_tolerance(&envs))?;
    let irm_s = irm_s_select(&envs, loss, Restriction::Odd, o.seed)?;
    let zero = Predictor::zero(OutcomeSpace::two_bit());

    let mut r = ExperimentReport::new(
        "failure-01",
        json!({"alpha": 0.1, "train_betas": betas, "test_beta": 0.9, "loss": "square", "seed": o.seed}),
    );
    r.table(predictor_table(
        "predictors",
        &[("f_erm", &erm), ("f_irm", &irm), ("f_irm_s", &irm_s)],
    ));
    values_close(
        &mut r,
        "f_erm",
        &FAILURE_ERM,
        &erm,
        1e-4,
        Origin::Published,
        &format!("{loc}, ERM table"),
    );
    values_close(
        &mut r,
        "f_irm",
        &FAILURE_IRM,
        &irm,
        1e-4,
        Origin::Published,
        &format!("{loc}, IRM table"),
    );
    values_close(
        &mut r,
        "f_irm_s",
        &FAILURE_IRM_S,
        &irm_s,
        1e-4,
        Origin::Published,
        &format!("{loc}, scalar IRM table"),
    );

    let preds = [
        ("f_erm", &erm),
        ("f_irm", &irm),
        ("f_irm_s", &irm_s),
        ("f_0", &zero),
    ];
    let mut t = Table::new(
        "losses",
        &["env", "beta", "f_erm", "f_irm", "f_irm_s", "f_0"],
    );
    let mut grid = [[0.0; 4]; 3];
    for (k, (env, beta)) in [("e1", 0.2), ("e2", 0.25), ("e_test", 0.9)]
        .into_iter()
        .enumerate()
    {
        let e = two_bit_env(0.1, beta)?;
        let mut row: Vec<Cell> = vec![env.into(), beta.into()];
        for (j, (name, f)) in preds.iter().enumerate() {
            let l = population_loss(f, &e, loss)?;
            grid[k][j] = l;
            row.push(l.into());
            r.close(
                &format!("L_{env}({name})"),
                FAILURE_LOSSES[k][j],
                l,
                0.005,
                Origin::Published,
                &format!("{loc}, loss table"),
            );
        }
        t.push(row);
    }
    r.table(t);
    r.holds(
        "L_test(f_irm_s) > L_test(f_erm)",
        grid[2][2] > grid[2][0],
        Origin::Published,
        &format!("{loc}, scalar IRM extrapolates worse than ERM"),
    );
    Ok(r)
}

/// Positive radius along odd direction `(cos t, sin t)` where the scalar gradient vanishes.
///
/// Along a ray `r·d` the gradient is `r·h(r)` with `h(r) = E[ℓ'(r·d(x), y)·d(x)]`,
/// which is non-decreasing in `r` for convex losses, so the nonzero root is unique.
fn ray_root(e: &Environment, loss: Loss, d: &[f64]) -> Option<f64> {
    let space = e.space();
    let h = |r: f64| -> f64 {
        let mut s = 0.0;
        for (x, &dx) in d.iter().enumerate() {
            for (j, &y) in space.y_points().iter().enumerate() {
                s += e.mass(x, j) * loss.d1(r * dx, y) * dx;
            }
        }
        s
    };
    if h(0.0) >= 0.0 {
        return None;
    }
    let mut hi = 1.0;
    while h(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return None;
        }
    }
    bisect(h, 0.0, hi, 1e-13)
}

struct Loci {
    table: Table,
    worst_residual: f64,
}

fn loci(alpha: f64, betas: &[f64], loss: Loss, samples: usize) -> Result<Loci> {
    let mut t = Table::new("loci", &["beta", "angle", "f(1,1)", "f(1,-1)"]);
    let space = OutcomeSpace::two_bit();
    let mut worst: f64 = 0.0;
    for &beta in betas {
        let e = two_bit_env(alpha, beta)?;
        for k in 0..samples {
            let angle = 2.0 * PI * k as f64 / samples as f64;
            let (s, c) = angle.sin_cos();
            let d = [c, s, -s, -c];
            if let Some(rad) = ray_root(&e, loss, &d) {
                let (u, v) = (rad * c, rad * s);
                let f = Predictor::new(space.clone(), vec![u, v, -v, -u])?;
                let g = gradient_residual(&f, std::slice::from_ref(&e), loss)?.max_abs;
                worst = worst.max(g);
                t.push(vec![beta.into(), angle.into(), u.into(), v.into()]);
            }
        }
    }
    Ok(Loci {
        table: t,
        worst_residual: worst,
    })
}

#[allow(clippy::too_many_arguments)]
fn loci_experiment(
    id: &str,
    alpha: f64,
    betas: &[f64],
    loss: Loss,
    reference: &[(&str, [f64; 4])],
    tol: f64,
    loc: &str,
    o: &Overrides,
) -> Result<ExperimentReport> {
    let samples = o.grid_or(720);
    let envs = two_bit_envs(alpha, betas)?;
    let mut r = ExperimentReport::new(
        id,
        json!({"alpha": alpha, "betas": betas, "loss": loss.name(), "samples": samples, "seed": o.seed}),
    );
    let l = loci(alpha, betas, loss, samples)?;
    r.at_most(
        "max scalar gradient on sampled loci",
        1e-9,
        l.worst_residual,
        Origin::Exact,
        "loci are zero sets by construction",
    );
    r.table(l.table);

    let sols = named_odd_solutions(&envs, loss, o.seed)?;
    let mut t = Table::new(
        "intersections",
        &["predictor", "f(1,1)", "f(1,-1)", "max_residual"],
    );
    let mut worst: f64 = 0.0;
    for (name, f) in &sols {
        let res = gradient_residual(f, &envs, loss)?.max_abs;
        worst = worst.max(res);
        t.push(vec![
            (*name).into(),
            f.value(0).into(),
            f.value(1).into(),
            res.into(),
        ]);
    }
    r.table(t);
    r.close(
        "intersection count",
        4.0,
        sols.len() as f64,
        0.0,
        Origin::Published,
        &format!("{loc}, four odd solutions"),
    );
    r.at_most(
        "intersections lie on every locus",
        1e-8,
        worst,
        Origin::Exact,
        "scalar gradient at each intersection",
    );
    for (name, vals) in reference {
        let f = lookup(&sols, name)?;
        r.close(
            &format!("{name}(1,1)"),
            vals[0],
            f.value(0),
            tol,
            Origin::Published,
            &format!("{loc}, solution table"),
        );
        r.close(
            &format!("{name}(1,-1)"),
            vals[1],
            f.value(1),
            tol,
            Origin::Published,
            &format!("{loc}, solution table"),
        );
    }
    Ok(r)
}

pub(super) fn square_loci(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "square-loss odd solutions on E_0.1";
    let mut r = loci_experiment(
        "fig1-loci",
        0.1,
        &[0.2, 0.25, 0.4, 0.9],
        Loss::Square,
        &SQUARE_ODD,
        1e-4,
        loc,
        o,
    )?;
    let envs = two_bit_envs(0.1, &[0.2, 0.25, 0.4, 0.9])?;
    let sols = named_odd_solutions(&envs, Loss::Square, o.seed)?;
    for (name, vals) in &SQUARE_ODD {
        let f = lookup(&sols, name)?;
        r.close(
            &format!("{name}(-1,1)"),
            vals[2],
            f.value(2),
            1e-4,
            Origin::Published,
            &format!("{loc}, solution table"),
        );
        r.close(
            &format!("{name}(-1,-1)"),
            vals[3],
            f.value(3),
            1e-4,
            Origin::Published,
            &format!("{loc}, solution table"),
        );
    }
    Ok(r)
}

pub(super) fn logistic_loci(o: &Overrides) -> Result<ExperimentReport> {
    loci_experiment(
        "fig6-loci",
        0.05,
        &[0.1, 0.2, 0.4, 0.9],
        Loss::Logistic,
        &LOGISTIC_ODD,
        1e-3,
        "logistic-loss odd solutions on E_0.05",
        o,
    )
}

struct LossCurves {
    table: Table,
    /// `(beta, index into NAMES of the lowest loss)`
    argmin: Vec<(f64, usize)>,
}

fn loss_curves(
    alpha: f64,
    sols: &[(&'static str, Predictor)],
    loss: Loss,
    points: usize,
) -> Result<LossCurves> {
    let mut cols = vec!["beta".to_string()];
    cols.extend(sols.iter().map(|(n, _)| n.to_string()));
    cols.push("lowest".into());
    let mut t = Table::new("losses", &cols);
    let mut argmin = Vec::new();
    for k in 0..points {
        let beta = 0.005 + 0.99 * k as f64 / (points - 1) as f64;
        let e = two_bit_env(alpha, beta)?;
        let ls = sols
            .iter()
            .map(|(_, f)| population_loss(f, &e, loss))
            .collect::<irm_core::Result<Vec<_>>>()?;
        let best = ls
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut row: Vec<Cell> = vec![beta.into()];
        row.extend(ls.iter().map(|&l| Cell::from(l)));
        row.push(sols[best].0.into());
        t.push(row);
        argmin.push((
            beta,
            NAMES.iter().position(|n| *n == sols[best].0).unwrap_or(0),
        ));
    }
    Ok(LossCurves { table: t, argmin })
}

fn crossover(
    f: &Predictor,
    g: &Predictor,
    alpha: f64,
    loss: Loss,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    bisect(
        |b| loss_at(f, alpha, b, loss) - loss_at(g, alpha, b, loss),
        lo,
        hi,
        1e-10,
    )
}

pub(super) fn square_losses(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "square-loss selection regimes on E_0.1";
    let (alpha, loss) = (0.1, Loss::Square);
    let envs = two_bit_envs(alpha, &[0.2, 0.25])?;
    let sols = named_odd_solutions(&envs, loss, o.seed)?;
    let points = o.grid_or(199);
    let mut r = ExperimentReport::new(
        "fig2-losses",
        json!({"alpha": alpha, "loss": "square", "points": points, "seed": o.seed}),
    );
    let curves = loss_curves(alpha, &sols, loss, points)?;
    r.table(curves.table);
    let (f1, firm, f2) = (
        lookup(&sols, "f_1")?,
        lookup(&sols, "f_irm")?,
        lookup(&sols, "f_2")?,
    );
    let c1 = crossover(f1, firm, alpha, loss, 0.01, 0.5).unwrap_or(f64::NAN);
    let c2 = crossover(f2, firm, alpha, loss, 0.5, 0.99).unwrap_or(f64::NAN);
    let mut t = Table::new("crossovers", &["pair", "beta"]);
    t.push(vec!["f_1/f_irm".into(), c1.into()]);
    t.push(vec!["f_irm/f_2".into(), c2.into()]);
    r.table(t);
    r.range(
        "f_1/f_irm crossover",
        0.28,
        0.29,
        c1,
        Origin::Published,
        &format!("{loc}, lower switch"),
    );
    r.range(
        "f_irm/f_2 crossover",
        0.71,
        0.72,
        c2,
        Origin::Published,
        &format!("{loc}, upper switch"),
    );
    let f1_low = curves
        .argmin
        .iter()
        .filter(|(b, _)| *b <= 0.28)
        .all(|&(_, k)| NAMES[k] == "f_1");
    r.holds(
        "f_1 lowest for beta <= 0.28",
        f1_low,
        Origin::Published,
        &format!("{loc}, f_1 region"),
    );
    Ok(r)
}

pub(super) fn logistic_losses(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "logistic-loss selection regimes on E_0.05";
    let (alpha, loss) = (0.05, Loss::Logistic);
    let envs = two_bit_envs(alpha, &[0.1, 0.2])?;
    let sols = named_odd_solutions(&envs, loss, o.seed)?;
    let points = o.grid_or(199);
    let mut r = ExperimentReport::new(
        "fig7-losses",
        json!({"alpha": alpha, "loss": "logistic", "points": points, "seed": o.seed}),
    );
    let curves = loss_curves(alpha, &sols, loss, points)?;
    r.table(curves.table);
    let (f1, firm) = (lookup(&sols, "f_1")?, lookup(&sols, "f_irm")?);
    let c1 = crossover(f1, firm, alpha, loss, 0.01, 0.6).unwrap_or(f64::NAN);
    let mut t = Table::new("crossovers", &["pair", "beta"]);
    t.push(vec!["f_1/f_irm".into(), c1.into()]);
    r.table(t);
    r.at_least(
        "f_1/f_irm crossover",
        0.25,
        c1,
        Origin::Published,
        &format!("{loc}, f_1 beats f_irm below 0.25"),
    );
    let below = curves
        .argmin
        .iter()
        .filter(|(b, _)| *b < 0.25)
        .all(|&(b, _)| loss_at(f1, alpha, b, loss) < loss_at(firm, alpha, b, loss));
    r.holds(
        "L(f_1) < L(f_irm) for beta < 0.25",
        below,
        Origin::Published,
        &format!("{loc}, f_1 region"),
    );
    Ok(r)
}

fn path_table(name: &str, sets: &[(&str, &[LambdaPathPoint])]) -> Table {
    let n_env = sets
        .first()
        .and_then(|(_, p)| p.first())
        .map_or(0, |p| p.residuals.len());
    let mut cols: Vec<String> = [
        "set",
        "lambda",
        "log2_lambda",
        "f(1,1)",
        "f(1,-1)",
        "f(-1,1)",
        "f(-1,-1)",
        "objective",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=n_env).map(|i| format!("grad_e{i}")));
    cols.extend((1..=n_env).map(|i| format!("loss_e{i}")));
    cols.push("stationary_points".into());
    let mut t = Table::new(name, &cols);
    for (set, path) in sets {
        for p in path.iter() {
            let mut row: Vec<Cell> = vec![(*set).into(), p.lambda.into(), p.log2_lambda.into()];
            row.extend(p.minimizer.values().iter().map(|&v| Cell::from(v)));
            row.push(p.objective.into());
            row.extend(p.residuals.iter().map(|&v| Cell::from(v)));
            row.extend(p.losses.iter().map(|&v| Cell::from(v)));
            row.push(p.stationary_points.into());
            t.push(row);
        }
    }
    t
}

pub(super) fn failure_path(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "penalized path on the failure-mode pair";
    let envs = two_bit_envs(0.1, &[0.2, 0.25])?;
    let lambdas = default_lambdas();
    let path = lambda_path(&envs, &lambdas, Loss::Square, Restriction::Odd, o.seed)?;
    let mut r = ExperimentReport::new(
        "fig3-path",
        json!({"alpha": 0.1, "train_betas": [0.2, 0.25], "loss": "square", "restriction": "odd", "lambdas": lambdas, "seed": o.seed}),
    );
    r.table(path_table("path", &[("exact", &path)]));
    let erm = erm_solve(&envs, Loss::Square)?.odd_part();
    let first = &path[0];
    let last = path.last().expect("non-empty path");
    r.close(
        "lambda=0 equals odd ERM",
        0.0,
        first.minimizer.max_distance(&erm),
        1e-8,
        Origin::Exact,
        &format!("{loc}, left end"),
    );
    values_close(
        &mut r,
        "lambda=2^20 ",
        &FAILURE_IRM_S,
        &last.minimizer,
        1e-2,
        Origin::Published,
        &format!("{loc}, right end approaches scalar IRM"),
    );
    let w2: Vec<f64> = path
        .iter()
        .map(|p| 0.5 * (p.minimizer.value(0) - p.minimizer.value(1)))
        .collect();
    let rising = w2.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    r.holds(
        "reliance on x2 grows with lambda",
        rising,
        Origin::Published,
        &format!("{loc}, x2 coefficient along the path"),
    );
    Ok(r)
}

pub(super) fn noisy_path(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "exact and perturbed triples";
    let exact = two_bit_envs(0.25, &[0.1, 0.2, 0.3])?;
    let noisy = vec![
        two_bit_env(0.245, 0.105)?,
        two_bit_env(0.255, 0.195)?,
        two_bit_env(0.251, 0.302)?,
    ];
    let lambdas = default_lambdas();
    let loss = Loss::Square;
    let pe = lambda_path(&exact, &lambdas, loss, Restriction::Odd, o.seed)?;
    let pn = lambda_path(&noisy, &lambdas, loss, Restriction::Odd, o.seed)?;
    let mut r = ExperimentReport::new(
        "fig5-noisy",
        json!({
            "exact": [[0.25, 0.1], [0.25, 0.2], [0.25, 0.3]],
            "noisy": [[0.245, 0.105], [0.255, 0.195], [0.251, 0.302]],
            "loss": "square", "restriction": "odd", "lambdas": lambdas, "seed": o.seed,
        }),
    );
    r.table(path_table("path", &[("exact", &pe), ("noisy", &pn)]));

    let half_x1 = Predictor::linear(OutcomeSpace::two_bit(), &[0.5, 0.0], 0.0)?;
    let end_e = &pe.last().expect("non-empty").minimizer;
    let end_n = &pn.last().expect("non-empty").minimizer;
    r.close(
        "exact path limit is 0.5*x1",
        0.0,
        end_e.max_distance(&half_x1),
        1e-2,
        Origin::Published,
        &format!("{loc}, exact path approaches the invariant predictor"),
    );
    r.at_most(
        "noisy path collapses",
        0.05,
        end_n.max_norm(),
        Origin::Published,
        &format!("{loc}, noisy set abruptly gives the zero predictor"),
    );
    let irm_s_noisy = irm_s_select(&noisy, loss, Restriction::Odd, o.seed)?;
    r.at_most(
        "scalar IRM on the noisy triple is zero",
        1e-9,
        irm_s_noisy.max_norm(),
        Origin::Published,
        &format!("{loc}, scalar IRM learns the zero predictor"),
    );
    let irm_s_exact = irm_s_select(&exact, loss, Restriction::Odd, o.seed)?;
    r.close(
        "scalar IRM on the exact triple is 0.5*x1",
        0.0,
        irm_s_exact.max_distance(&half_x1),
        1e-9,
        Origin::Derived,
        &format!("{loc}, both notions recover the invariant predictor"),
    );
    let small = pe
        .iter()
        .zip(&pn)
        .filter(|(a, _)| a.lambda <= 1.0)
        .fold(0.0f64, |m, (a, b)| {
            m.max(a.minimizer.max_distance(&b.minimizer))
        });
    r.at_most(
        "paths agree for small lambda",
        0.05,
        small,
        Origin::Published,
        &format!("{loc}, results are similar for small lambda"),
    );

    let collapse = collapse_lambda(&pn, 0.05);
    let mut t = Table::new(
        "summary",
        &["set", "collapse_lambda", "end_f(1,1)", "end_f(1,-1)"],
    );
    t.push(vec![
        "exact".into(),
        collapse_lambda(&pe, 0.05).into(),
        end_e.value(0).into(),
        end_e.value(1).into(),
    ]);
    t.push(vec![
        "noisy".into(),
        collapse.into(),
        end_n.value(0).into(),
        end_n.value(1).into(),
    ]);
    r.table(t);
    match collapse {
        Some(l) => r.note(format!(
            "noisy path first has max-norm below 0.05 at lambda = {l}"
        )),
        None => r.note("noisy path never drops below max-norm 0.05 on this grid"),
    }
    Ok(r)
}

/// Smallest alpha in `[lo, hi]` where the odd logistic solution count drops from 4,
/// bracketed to `tol`.
pub fn logistic_regime_boundary(lo: f64, hi: f64, tol: f64, seed: u64) -> Result<(f64, f64)> {
    let count = |alpha: f64| -> Result<usize> {
        let envs = two_bit_envs(alpha, &[0.1, 0.2])?;
        Ok(solve_scalar_invariant(&envs, Loss::Logistic, Restriction::Odd, seed)?.len())
    };
    let (mut a, mut b) = (lo, hi);
    if count(a)? != 4 || count(b)? == 4 {
        return Err(anyhow!(
            "solution count does not change across [{lo}, {hi}]"
        ));
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if count(m)? == 4 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((a, b))
}

pub(super) fn logistic_solutions(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "logistic-loss odd solutions on E_0.05";
    let envs = two_bit_envs(0.05, &[0.1, 0.2])?;
    let loss = Loss::Logistic;
    let sols = named_odd_solutions(&envs, loss, o.seed)?;
    let mut r = ExperimentReport::new(
        "app-a3-logistic",
        json!({"alpha": 0.05, "train_betas": [0.1, 0.2], "loss": "logistic", "restriction": "odd", "seed": o.seed}),
    );
    let named: Vec<(&str, &Predictor)> = sols.iter().map(|(n, f)| (*n, f)).collect();
    r.table(predictor_table("solutions", &named));
    r.close(
        "solution count",
        4.0,
        sols.len() as f64,
        0.0,
        Origin::Published,
        &format!("{loc}, four odd solutions"),
    );
    for (name, vals) in &LOGISTIC_ODD {
        let f = lookup(&sols, name)?;
        values_close(
            &mut r,
            name,
            vals,
            f,
            1e-3,
            Origin::Published,
            &format!("{loc}, solution table"),
        );
    }
    let firm = lookup(&sols, "f_irm")?;
    r.close(
        "f_irm(1,1) = log 19",
        19f64.ln(),
        firm.value(0),
        1e-6,
        Origin::Exact,
        "logit of the invariant conditional mean 0.9",
    );
    let full = invariant_predictors_full(&envs, loss, default_tolerance(&envs))?;
    let log19 = Predictor::linear(OutcomeSpace::two_bit(), &[19f64.ln(), 0.0], 0.0)?;
    r.holds(
        "full IRM set contains log(19)*x1",
        full.contains(&log19, 1e-9),
        Origin::Derived,
        "pointwise logistic optimum of the x1 partition",
    );

    let (a, b) = logistic_regime_boundary(0.05, 0.12, 1e-4, o.seed)?;
    let mut t = Table::new("regime", &["quantity", "value"]);
    t.push(vec!["boundary_lo".into(), a.into()]);
    t.push(vec!["boundary_hi".into(), b.into()]);
    t.push(vec!["stated_boundary".into(), 0.077.into()]);
    r.table(t);
    r.note(format!(
        "four odd solutions exist up to alpha in [{a:.5}, {b:.5}]; the stated boundary is 0.077"
    ));
    Ok(r)
}
