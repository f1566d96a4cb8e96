//! Experiments on the three-valued and piecewise-linear families and the subset scans.

use anyhow::{anyhow, Result};
use irm_core::{
    conditional_mean, default_tolerance, invariant_predictors_full, irm_select,
    is_invariant_partition, ood_sup_risk, piecewise_pi_env, piecewise_pi_params, population_loss,
    section4_env, subset_invariance_scan, Environment, EnvironmentFamily, Loss, OutcomeSpace,
    Partition, Predictor, SweepGrid,
};
use serde_json::json;

use super::Overrides;
use crate::report::{ExperimentReport, Origin};
use crate::table::{Cell, Table};

fn linear(space: &std::sync::Arc<OutcomeSpace>, c: [f64; 2]) -> Result<Predictor> {
    Ok(Predictor::linear(space.clone(), &c, 0.0)?)
}

pub(super) fn three_valued(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "three-valued family";
    let space = OutcomeSpace::ternary_pair();
    let f1 = linear(&space, [0.3, 0.0])?;
    let f2 = linear(&space, [0.0, 0.3])?;
    let f0 = Predictor::zero(space.clone());
    let points = o.grid_or(99);
    let thetas: Vec<f64> = (0..points)
        .map(|k| -0.16 + 0.49 * k as f64 / (points - 1) as f64)
        .collect();
    let train = [-0.1, -0.05];
    let mut r = ExperimentReport::new(
        "sec4-prop2",
        json!({"thetas": {"lo": -0.16, "hi": 0.33, "points": points}, "train_thetas": train, "loss": "square"}),
    );

    let mut t = Table::new("losses", &["theta", "0.3*x1", "0.3*x2", "0"]);
    let (mut dev1, mut dev2, mut dev0) = (0.0f64, 0.0f64, 0.0f64);
    for &th in &thetas {
        let e = section4_env(th)?;
        let l1 = population_loss(&f1, &e, Loss::Square)?;
        let l2 = population_loss(&f2, &e, Loss::Square)?;
        let l0 = population_loss(&f0, &e, Loss::Square)?;
        dev1 = dev1.max((l1 - 0.47).abs());
        dev2 = dev2.max((l2 - (0.47 + 0.09 * th)).abs());
        dev0 = dev0.max((l0 - 0.5).abs());
        t.push(vec![th.into(), l1.into(), l2.into(), l0.into()]);
    }
    r.table(t);
    r.close(
        "max |L(0.3*x1) - 0.47|",
        0.0,
        dev1,
        1e-9,
        Origin::Published,
        &format!("{loc}, loss of the x1 predictor"),
    );
    r.close(
        "max |L(0.3*x2) - (0.47 + 0.09*theta)|",
        0.0,
        dev2,
        1e-9,
        Origin::Published,
        &format!("{loc}, loss of the x2 predictor"),
    );
    r.close(
        "max |L(0) - 0.5|",
        0.0,
        dev0,
        1e-9,
        Origin::Published,
        &format!("{loc}, loss of the zero predictor"),
    );

    let envs: Vec<Environment> = train
        .iter()
        .map(|&th| section4_env(th))
        .collect::<irm_core::Result<_>>()?;
    let tol = default_tolerance(&envs);
    let set = invariant_predictors_full(&envs, Loss::Square, tol)?;
    let mut inv = Table::new(
        "invariant_predictors",
        &[
            "index",
            "depends_on_x1",
            "depends_on_x2",
            "train_loss",
            "values",
        ],
    );
    let mut single = true;
    for (k, f) in set.predictors().enumerate() {
        let (a, b) = (f.depends_on(0, 1e-9), f.depends_on(1, 1e-9));
        single &= !(a && b);
        let l: f64 = envs
            .iter()
            .map(|e| population_loss(f, e, Loss::Square))
            .sum::<irm_core::Result<f64>>()?;
        let vals: Vec<String> = f
            .values()
            .iter()
            .map(|v| crate::table::fmt_num(*v))
            .collect();
        inv.push(vec![
            k.into(),
            a.into(),
            b.into(),
            l.into(),
            vals.join(" ").into(),
        ]);
    }
    r.table(inv);
    r.holds(
        "invariant predictors use at most one coordinate",
        single,
        Origin::Published,
        &format!("{loc}, structure of the invariant set"),
    );
    r.holds(
        "0.3*x1 and 0.3*x2 are invariant",
        set.contains(&f1, 1e-9) && set.contains(&f2, 1e-9),
        Origin::Published,
        &format!("{loc}, the two candidate predictors"),
    );

    let chosen = irm_select(&envs, Loss::Square, tol)?;
    r.close(
        "IRM picks 0.3*x2",
        0.0,
        chosen.max_distance(&f2),
        1e-9,
        Origin::Published,
        &format!("{loc}, IRM prefers the x2 predictor"),
    );
    let train_better = envs.iter().all(|e| {
        population_loss(&f2, e, Loss::Square).unwrap_or(f64::NAN)
            < population_loss(&f1, e, Loss::Square).unwrap_or(f64::NAN)
    });
    r.holds(
        "L_e(0.3*x2) < L_e(0.3*x1) on training",
        train_better,
        Origin::Published,
        &format!("{loc}, training losses"),
    );

    let grid = SweepGrid::default();
    let s1 = ood_sup_risk(&f1, &EnvironmentFamily::Section4, Loss::Square, grid)?;
    let s2 = ood_sup_risk(&f2, &EnvironmentFamily::Section4, Loss::Square, grid)?;
    let s0 = ood_sup_risk(&f0, &EnvironmentFamily::Section4, Loss::Square, grid)?;
    let mut sup = Table::new(
        "sup_risk",
        &["predictor", "sup_loss", "argmax_theta", "evaluated"],
    );
    for (name, s) in [("0.3*x1", &s1), ("0.3*x2", &s2), ("0", &s0)] {
        sup.push(vec![
            name.into(),
            s.value.into(),
            s.argmax.into(),
            s.evaluated.into(),
        ]);
    }
    r.table(sup);
    r.close(
        "sup L(0.3*x1)",
        0.47,
        s1.value,
        1e-9,
        Origin::Published,
        &format!("{loc}, worst-case loss of the x1 predictor"),
    );
    r.close(
        "sup L(0.3*x2)",
        0.5,
        s2.value,
        1e-3,
        Origin::Published,
        &format!("{loc}, worst-case loss of the x2 predictor"),
    );
    r.close(
        "sup L(0)",
        0.5,
        s0.value,
        1e-9,
        Origin::Published,
        &format!("{loc}, worst-case loss of the zero predictor"),
    );
    r.holds(
        "0.3*x1 has strictly smaller sup risk",
        s1.value < s2.value - 1e-3,
        Origin::Derived,
        "sup risks on the default grid",
    );
    Ok(r)
}

/// Parameter-free subsets of {-1,0,1}^2 with nonzero conditional mean.
/// Subset label, membership test, conditional mean.
type SubsetReference = (&'static str, fn(i32, i32) -> bool, f64);

fn ternary_reference() -> [SubsetReference; 6] {
    [
        ("X1=+1", |a, _| a == 1, 0.3),
        ("X1=-1", |a, _| a == -1, -0.3),
        ("X2=+1", |_, b| b == 1, 0.3),
        ("X2=-1", |_, b| b == -1, -0.3),
        ("X1 in {-1,0}", |a, _| a <= 0, -0.15),
        ("X1 in {0,+1}", |a, _| a >= 0, 0.15),
    ]
}

fn mask_where(space: &OutcomeSpace, pred: impl Fn(&[i32]) -> bool) -> u32 {
    space
        .x_points()
        .iter()
        .enumerate()
        .filter(|(_, x)| pred(x))
        .fold(0, |m, (i, _)| m | 1 << i)
}

fn describe_members(space: &OutcomeSpace, members: &[usize]) -> String {
    members
        .iter()
        .map(|&i| space.format_point(i))
        .collect::<Vec<_>>()
        .join(" ")
}

pub(super) fn ternary_scan(_o: &Overrides) -> Result<ExperimentReport> {
    let loc = "subset scan over {-1,0,1}^2";
    let probes = [-0.12, -0.03, 0.08, 0.21, 0.3];
    let envs: Vec<Environment> = probes
        .iter()
        .map(|&th| section4_env(th))
        .collect::<irm_core::Result<_>>()?;
    let tol = default_tolerance(&envs);
    let rows = subset_invariance_scan(&EnvironmentFamily::Section4, &probes, tol)?;
    let space = OutcomeSpace::ternary_pair();
    let mut r = ExperimentReport::new("app-d-scan", json!({"probe_thetas": probes, "tol": tol}));

    let mut t = Table::new(
        "subsets",
        &["mask", "size", "members", "invariant", "common_mean"],
    );
    for row in &rows {
        t.push(vec![
            row.mask.into(),
            row.members.len().into(),
            describe_members(&space, &row.members).into(),
            row.invariant.into(),
            row.common_mean.into(),
        ]);
    }
    r.table(t);
    let invariant = rows.iter().filter(|r| r.invariant).count();
    let nonzero: Vec<_> = rows
        .iter()
        .filter(|r| r.invariant && r.common_mean.is_some_and(|m| m.abs() > 1e-9))
        .collect();
    r.close(
        "subsets scanned",
        511.0,
        rows.len() as f64,
        0.0,
        Origin::Published,
        &format!("{loc}, all non-empty subsets"),
    );
    r.close(
        "parameter-free subsets",
        37.0,
        invariant as f64,
        0.0,
        Origin::Published,
        &format!("{loc}, subsets whose mean ignores theta"),
    );
    r.close(
        "nonzero parameter-free subsets",
        6.0,
        nonzero.len() as f64,
        0.0,
        Origin::Published,
        &format!("{loc}, nonzero means"),
    );

    let mut summary = Table::new("nonzero", &["characterization", "members", "mean"]);
    for (name, pred, mean) in ternary_reference() {
        let mask = mask_where(&space, |x| pred(x[0], x[1]));
        let row = rows
            .iter()
            .find(|r| r.mask == mask)
            .ok_or_else(|| anyhow!("mask {mask} missing from scan"))?;
        let got = row.common_mean.unwrap_or(f64::NAN);
        summary.push(vec![
            name.into(),
            describe_members(&space, &row.members).into(),
            row.common_mean.into(),
        ]);
        r.close(
            &format!("E[Y | {name}]"),
            mean,
            got,
            1e-9,
            Origin::Published,
            &format!("{loc}, nonzero table"),
        );
        r.holds(
            &format!("{name} is parameter-free"),
            row.invariant,
            Origin::Published,
            &format!("{loc}, nonzero table"),
        );
    }
    r.table(summary);
    Ok(r)
}

pub(super) fn piecewise(o: &Overrides) -> Result<ExperimentReport> {
    let loc = "piecewise-linear family";
    let space = OutcomeSpace::two_bit();
    let train_thetas = [0.05, 0.1, 0.15, 0.2, 0.25];
    let train: Vec<Environment> = train_thetas
        .iter()
        .map(|&t| piecewise_pi_env(t))
        .collect::<irm_core::Result<_>>()?;
    let mut extended = train.clone();
    extended.push(piecewise_pi_env(0.5)?);
    let by_x1 = Partition::by_key(space.clone(), |x| x[0]);
    let f = linear(&space, [0.8, 0.0])?;
    let tol = default_tolerance(&train);
    let mut r = ExperimentReport::new(
        "app-e-counterexample",
        json!({"train_thetas": train_thetas, "extra_theta": 0.5, "tol": tol}),
    );

    let points = o.grid_or(99);
    let pos = [space.index_of(&[1, 1]), space.index_of(&[1, -1])]
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| anyhow!("two-bit points missing"))?;
    let neg = [space.index_of(&[-1, 1]), space.index_of(&[-1, -1])]
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| anyhow!("two-bit points missing"))?;
    let mut t = Table::new(
        "conditional_means",
        &["theta", "alpha", "beta", "E[Y|X1=+1]", "E[Y|X1=-1]"],
    );
    let (mut flat, mut breaks) = (0.0f64, true);
    for k in 1..=points {
        // k/(points+1) keeps theta = 1/4 on the grid for the default size
        let theta = k as f64 / (points + 1) as f64;
        let (alpha, beta) = piecewise_pi_params(theta);
        let e = piecewise_pi_env(theta)?;
        let mp = conditional_mean(&e, &pos)?.unwrap_or(f64::NAN);
        let mn = conditional_mean(&e, &neg)?.unwrap_or(f64::NAN);
        if theta <= 0.25 {
            flat = flat.max((mp - 0.8).abs()).max((mn + 0.8).abs());
        } else {
            breaks &= (mp - 0.8).abs() > 1e-9;
        }
        t.push(vec![
            theta.into(),
            alpha.into(),
            beta.into(),
            mp.into(),
            mn.into(),
        ]);
    }
    r.table(t);

    let on_train = is_invariant_partition(&by_x1, &train, tol)?;
    let on_ext = is_invariant_partition(&by_x1, &extended, tol)?;
    let mut inv = Table::new(
        "invariance",
        &[
            "environments",
            "x1_partition_invariant",
            "max_cell_deviation",
        ],
    );
    for (name, rep) in [("train", &on_train), ("train+0.5", &on_ext)] {
        let dev = rep.cells.iter().fold(0.0f64, |m, c| m.max(c.deviation));
        inv.push(vec![name.into(), rep.invariant.into(), Cell::from(dev)]);
    }
    r.table(inv);
    r.holds(
        "x1 partition invariant on theta <= 1/4",
        on_train.invariant,
        Origin::Published,
        &format!("{loc}, invariance on the training range"),
    );
    r.holds(
        "x1 partition not invariant with theta = 0.5",
        !on_ext.invariant,
        Origin::Published,
        &format!("{loc}, invariance breaks past 1/4"),
    );
    let full = invariant_predictors_full(&train, Loss::Square, tol)?;
    r.holds(
        "0.8*x1 is in the invariant set of the training range",
        full.contains(&f, 1e-9),
        Origin::Published,
        &format!("{loc}, the 0.8*x1 predictor"),
    );
    r.close(
        "E[Y|X1] = 0.8*x1 on theta <= 1/4",
        0.0,
        flat,
        1e-12,
        Origin::Published,
        &format!("{loc}, conditional mean on the training range"),
    );
    r.holds(
        "E[Y|X1=+1] moves for theta > 1/4",
        breaks,
        Origin::Published,
        &format!("{loc}, conditional mean past 1/4"),
    );
    Ok(r)
}

type MeanFormula = fn(f64, f64) -> f64;

/// Printed closed forms for every subset of {-1,1}^2, with whether they ignore beta.
fn two_bit_reference() -> [(&'static [[i32; 2]], &'static str, MeanFormula, bool); 15] {
    [
        (
            &[[1, 1]],
            "(1-a-b)/(1-a+(2a-1)b)",
            |a, b| (1.0 - a - b) / (1.0 - a + (2.0 * a - 1.0) * b),
            false,
        ),
        (
            &[[1, -1]],
            "(a-b)/(-a+(2a-1)b)",
            |a, b| (a - b) / (-a + (2.0 * a - 1.0) * b),
            false,
        ),
        (
            &[[-1, 1]],
            "(-a+b)/(-a+(2a-1)b)",
            |a, b| (-a + b) / (-a + (2.0 * a - 1.0) * b),
            false,
        ),
        (
            &[[-1, -1]],
            "(a-1+b)/(1-a+(2a-1)b)",
            |a, b| (a - 1.0 + b) / (1.0 - a + (2.0 * a - 1.0) * b),
            false,
        ),
        (&[[1, 1], [1, -1]], "1-2a", |a, _| 1.0 - 2.0 * a, true),
        (&[[1, 1], [-1, 1]], "1-2b", |_, b| 1.0 - 2.0 * b, false),
        (&[[1, 1], [-1, -1]], "0", |_, _| 0.0, true),
        (&[[1, -1], [-1, 1]], "0", |_, _| 0.0, true),
        (&[[1, -1], [-1, -1]], "2b-1", |_, b| 2.0 * b - 1.0, false),
        (&[[-1, 1], [-1, -1]], "2a-1", |a, _| 2.0 * a - 1.0, true),
        (
            &[[1, 1], [1, -1], [-1, 1]],
            "(a-1+b)/(-1-a+(2a-1)b)",
            |a, b| (a - 1.0 + b) / (-1.0 - a + (2.0 * a - 1.0) * b),
            false,
        ),
        (
            &[[1, 1], [1, -1], [-1, -1]],
            "(-a+b)/(2-a+(2a-1)b)",
            |a, b| (-a + b) / (2.0 - a + (2.0 * a - 1.0) * b),
            false,
        ),
        (
            &[[1, 1], [-1, 1], [-1, -1]],
            "(a-b)/(2-a+(2a-1)b)",
            |a, b| (a - b) / (2.0 - a + (2.0 * a - 1.0) * b),
            false,
        ),
        (
            &[[1, -1], [-1, 1], [-1, -1]],
            "(1-a-b)/(-1-a+(2a-1)b)",
            |a, b| (1.0 - a - b) / (-1.0 - a + (2.0 * a - 1.0) * b),
            false,
        ),
        (&[[1, 1], [1, -1], [-1, 1], [-1, -1]], "0", |_, _| 0.0, true),
    ]
}

pub(super) fn two_bit_subsets(_o: &Overrides) -> Result<ExperimentReport> {
    let loc = "subset table over {-1,1}^2";
    let alpha = 0.1;
    let alphas = [0.1, 0.25, 0.7];
    let betas = [0.15, 0.3, 0.6, 0.85];
    let space = OutcomeSpace::two_bit();
    let scan = subset_invariance_scan(&EnvironmentFamily::two_bit(alpha)?, &betas, 1e-9)?;
    let mut r = ExperimentReport::new(
        "app-b-table1",
        json!({"alpha": alpha, "probe_betas": betas, "formula_alphas": alphas}),
    );
    let mut cols = vec![
        "subset".to_string(),
        "formula".into(),
        "independent_of_beta".into(),
    ];
    cols.extend(betas.iter().map(|b| format!("mean_beta_{b}")));
    let mut t = Table::new("subsets", &cols);
    for (points, text, formula, stated) in two_bit_reference() {
        let members: Vec<usize> = points
            .iter()
            .map(|p| {
                space
                    .index_of(p)
                    .ok_or_else(|| anyhow!("point {p:?} missing"))
            })
            .collect::<Result<_>>()?;
        let name = describe_members(&space, &members);
        let mask = members.iter().fold(0u32, |m, &i| m | 1 << i);
        let row = scan
            .iter()
            .find(|r| r.mask == mask)
            .ok_or_else(|| anyhow!("mask {mask} missing from scan"))?;
        let mut worst = 0.0f64;
        for &a in &alphas {
            for &b in &betas {
                let e = irm_core::two_bit_env(a, b)?;
                let m = conditional_mean(&e, &members)?.unwrap_or(f64::NAN);
                worst = worst.max((m - formula(a, b)).abs());
            }
        }
        let mut out: Vec<Cell> = vec![name.clone().into(), text.into(), row.invariant.into()];
        for &b in &betas {
            out.push(conditional_mean(&irm_core::two_bit_env(alpha, b)?, &members)?.into());
        }
        t.push(out);
        r.close(
            &format!("E[Y | {name}] formula"),
            0.0,
            worst,
            1e-12,
            Origin::Published,
            &format!("{loc}, closed-form mean"),
        );
        r.holds(
            &format!(
                "{name} independent of beta: {}",
                if stated { "yes" } else { "no" }
            ),
            row.invariant == stated,
            Origin::Published,
            &format!("{loc}, independence column"),
        );
    }
    r.table(t);
    Ok(r)
}
