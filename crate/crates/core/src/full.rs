//! Full invariance: a representation is invariant when every one of its level
//! sets carries the same conditional label mean in every environment that
//! reaches it. Over a finite input space that reduces to checking partitions.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{shared_space, Environment, EnvironmentFamily, OutcomeSpace};
use crate::error::{Error, Result};
use crate::partition::{enumerate_partitions, Partition, RestrictedGrowth};
use crate::risk::{canonical_cmp, pointwise_optimal, total_loss, Loss, Predictor};

/// Invariance tolerance for environments built by the exact constructors.
pub const EXACT_TOL: f64 = 1e-9;
/// Invariance tolerance for environments read from files.
pub const FILE_TOL: f64 = 1e-6;
/// Two predictors closer than this in max-norm are the same predictor.
pub const DEDUP_TOL: f64 = 1e-9;

const MAX_WITNESSES: usize = 16;
const MAX_SKIP_RECORDS: usize = 64;
const BATCH: usize = 8192;
const MAX_SCAN_POINTS: usize = 9;

/// `EXACT_TOL` when every environment came from a constructor, else `FILE_TOL`.
pub fn default_tolerance(envs: &[Environment]) -> f64 {
    if envs.iter().all(|e| e.params().is_some()) {
        EXACT_TOL
    } else {
        FILE_TOL
    }
}

/// Per-environment label moments and masses of every subset of `X`, indexed
/// by bitmask.
struct SubsetTables {
    mass: Vec<Vec<f64>>,
    moment: Vec<Vec<f64>>,
}

impl SubsetTables {
    fn new(envs: &[Environment], n: usize) -> Self {
        let size = 1usize << n;
        let mut mass = Vec::with_capacity(envs.len());
        let mut moment = Vec::with_capacity(envs.len());
        for e in envs {
            let mut m = vec![0.0; size];
            let mut d = vec![0.0; size];
            for mask in 1..size {
                let low = mask.trailing_zeros() as usize;
                let rest = mask & (mask - 1);
                m[mask] = m[rest] + e.marginal_x(low);
                d[mask] = d[rest] + e.label_moment(low);
            }
            mass.push(m);
            moment.push(d);
        }
        SubsetTables { mass, moment }
    }

    fn means(&self, mask: usize) -> Vec<Option<f64>> {
        self.mass
            .iter()
            .zip(&self.moment)
            .map(|(m, d)| (m[mask] > 0.0).then(|| d[mask] / m[mask]))
            .collect()
    }

    /// Largest pairwise gap among the defined means, and their average.
    fn spread(&self, mask: usize) -> (f64, Option<f64>) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for (m, d) in self.mass.iter().zip(&self.moment) {
            if m[mask] > 0.0 {
                let v = d[mask] / m[mask];
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            (0.0, None)
        } else {
            (hi - lo, Some(sum / count as f64))
        }
    }
}

fn mask_of(cell: &[usize]) -> usize {
    cell.iter().fold(0usize, |m, &i| m | (1 << i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub members: Vec<usize>,
    /// `None` where the environment puts no mass on the cell.
    pub means: Vec<Option<f64>>,
    /// Largest gap between two defined means.
    pub deviation: f64,
    pub invariant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub invariant: bool,
    pub cells: Vec<CellReport>,
}

/// Checks a partition against the environments cell by cell. Cells an
/// environment never reaches impose no constraint on it.
pub fn is_invariant_partition(
    p: &Partition,
    envs: &[Environment],
    tol: f64,
) -> Result<InvarianceReport> {
    let space = shared_space(envs)?;
    if space.as_ref() != p.space().as_ref() {
        return Err(Error::SpaceMismatch);
    }
    let cells: Vec<CellReport> = p
        .cells()
        .iter()
        .map(|cell| {
            let means: Vec<Option<f64>> = envs
                .iter()
                .map(|e| {
                    let mass: f64 = cell.iter().map(|&i| e.marginal_x(i)).sum();
                    let moment: f64 = cell.iter().map(|&i| e.label_moment(i)).sum();
                    (mass > 0.0).then(|| moment / mass)
                })
                .collect();
            let defined: Vec<f64> = means.iter().flatten().copied().collect();
            let deviation = match (
                defined.iter().copied().reduce(f64::min),
                defined.iter().copied().reduce(f64::max),
            ) {
                (Some(lo), Some(hi)) => hi - lo,
                _ => 0.0,
            };
            CellReport {
                members: cell.clone(),
                means,
                deviation,
                invariant: deviation <= tol,
            }
        })
        .collect();
    Ok(InvarianceReport {
        invariant: cells.iter().all(|c| c.invariant),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub partition: Partition,
    /// Downstream value assigned to each cell, in cell order.
    pub cell_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantPredictor {
    pub predictor: Predictor,
    /// The first witnessing partitions in enumeration order.
    pub witnesses: Vec<Witness>,
    pub witness_count: u64,
}

/// A partition dropped because one of its cells has a label mean of ±1,
/// which logistic loss cannot fit with a finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedPartition {
    pub labels: Vec<usize>,
    pub cell: Vec<usize>,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct InvariantPredictorSet {
    pub members: Vec<InvariantPredictor>,
    pub envs: Vec<Environment>,
    pub loss: Loss,
    pub tol: f64,
    pub partitions_checked: u64,
    pub skipped: Vec<SkippedPartition>,
    pub skipped_total: u64,
}

impl InvariantPredictorSet {
    pub fn predictors(&self) -> impl Iterator<Item = &Predictor> {
        self.members.iter().map(|m| &m.predictor)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, f: &Predictor, tol: f64) -> bool {
        self.predictors().any(|g| g.max_distance(f) <= tol)
    }
}

enum Outcome {
    Rejected,
    Accepted(Vec<f64>, Vec<f64>),
    Skipped(Vec<usize>, f64),
}

fn evaluate(rgs: &[usize], tables: &SubsetTables, loss: Loss, tol: f64) -> Result<Outcome> {
    let ncells = rgs.iter().max().map_or(0, |m| m + 1);
    let mut masks = vec![0usize; ncells];
    for (i, &c) in rgs.iter().enumerate() {
        masks[c] |= 1 << i;
    }
    let mut means = Vec::with_capacity(ncells);
    for &mask in &masks {
        let (dev, mean) = tables.spread(mask);
        if dev > tol {
            return Ok(Outcome::Rejected);
        }
        means.push(mean);
    }
    let mut cell_values = Vec::with_capacity(ncells);
    for (&mask, mean) in masks.iter().zip(means) {
        cell_values.push(match mean {
            None => 0.0,
            Some(m) => match pointwise_optimal(m, loss) {
                Ok(v) => v,
                Err(Error::Separable { mean }) => {
                    let cell = (0..rgs.len()).filter(|i| mask >> i & 1 == 1).collect();
                    return Ok(Outcome::Skipped(cell, mean));
                }
                Err(e) => return Err(e),
            },
        });
    }
    let values = rgs.iter().map(|&c| cell_values[c]).collect();
    Ok(Outcome::Accepted(values, cell_values))
}

/// Every predictor that is optimal in all environments on top of some
/// invariant representation, deduplicated and sorted by value table.
pub fn invariant_predictors_full(
    envs: &[Environment],
    loss: Loss,
    tol: f64,
) -> Result<InvariantPredictorSet> {
    let space = shared_space(envs)?;
    loss.check_space(&space)?;
    if !(tol >= 0.0) {
        return Err(Error::Domain {
            name: "tol",
            value: tol,
            domain: "[0, inf)",
        });
    }
    // validates the size cap
    enumerate_partitions(&space)?;
    let n = space.len_x();
    let tables = SubsetTables::new(envs, n);

    let mut set = InvariantPredictorSet {
        members: Vec::new(),
        envs: envs.to_vec(),
        loss,
        tol,
        partitions_checked: 0,
        skipped: Vec::new(),
        skipped_total: 0,
    };
    let mut strings = RestrictedGrowth::new(n);
    loop {
        let batch: Vec<Vec<usize>> = strings.by_ref().take(BATCH).collect();
        if batch.is_empty() {
            break;
        }
        let outcomes: Vec<Result<Outcome>> = batch
            .par_iter()
            .map(|rgs| evaluate(rgs, &tables, loss, tol))
            .collect();
        set.partitions_checked += batch.len() as u64;
        for (rgs, outcome) in batch.into_iter().zip(outcomes) {
            match outcome? {
                Outcome::Rejected => {}
                Outcome::Skipped(cell, mean) => {
                    set.skipped_total += 1;
                    if set.skipped.len() < MAX_SKIP_RECORDS {
                        set.skipped.push(SkippedPartition {
                            labels: rgs,
                            cell,
                            mean,
                        });
                    }
                }
                Outcome::Accepted(values, cell_values) => {
                    let witness = Witness {
                        partition: Partition::from_rgs(space.clone(), rgs),
                        cell_values,
                    };
                    merge(&mut set.members, &space, values, witness)?;
                }
            }
        }
    }
    set.members
        .sort_by(|a, b| canonical_cmp(a.predictor.values(), b.predictor.values()));
    Ok(set)
}

fn merge(
    members: &mut Vec<InvariantPredictor>,
    space: &std::sync::Arc<OutcomeSpace>,
    values: Vec<f64>,
    witness: Witness,
) -> Result<()> {
    let found = members.iter_mut().find(|m| {
        m.predictor
            .values()
            .iter()
            .zip(&values)
            .all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
    });
    match found {
        Some(m) => {
            m.witness_count += 1;
            if m.witnesses.len() < MAX_WITNESSES {
                m.witnesses.push(witness);
            }
        }
        None => members.push(InvariantPredictor {
            predictor: Predictor::new(space.clone(), values)?,
            witnesses: vec![witness],
            witness_count: 1,
        }),
    }
    Ok(())
}

/// The invariant predictor with the smallest summed training loss; ties go to
/// the lexicographically smallest value table.
pub fn irm_select(envs: &[Environment], loss: Loss, tol: f64) -> Result<Predictor> {
    let set = invariant_predictors_full(envs, loss, tol)?;
    select_min_loss(set.predictors(), envs, loss)?.ok_or(Error::NoInvariantPredictor)
}

/// Minimum summed loss over candidates already in canonical order.
pub(crate) fn select_min_loss<'a>(
    candidates: impl Iterator<Item = &'a Predictor>,
    envs: &[Environment],
    loss: Loss,
) -> Result<Option<Predictor>> {
    let mut best: Option<(f64, &Predictor)> = None;
    for f in candidates {
        let l = total_loss(f, envs, loss)?;
        let better = match best {
            None => true,
            Some((b, g)) => match (l - b).abs() <= 1e-12 * (1.0 + b.abs()) {
                true => canonical_cmp(f.values(), g.values()) == Ordering::Less,
                false => l < b,
            },
        };
        if better {
            best = Some((l, f));
        }
    }
    Ok(best.map(|(_, f)| f.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetRow {
    /// Bit `i` set when input point `i` is in the subset.
    pub mask: u32,
    pub members: Vec<usize>,
    pub invariant: bool,
    /// Shared conditional mean; `None` when it varies or is never defined.
    pub common_mean: Option<f64>,
}

/// For every non-empty subset of `X`, whether `E[Y | X ∈ S]` stays fixed
/// across the probe environments. Undefined means are compatible with any.
pub fn subset_invariance_scan(
    family: &EnvironmentFamily,
    probe_params: &[f64],
    tol: f64,
) -> Result<Vec<SubsetRow>> {
    if probe_params.len() < 3 {
        return Err(Error::Contract(format!(
            "subset scan needs at least 3 probe parameters, got {}",
            probe_params.len()
        )));
    }
    let envs = family.members(probe_params)?;
    let space = shared_space(&envs)?;
    let n = space.len_x();
    if n > MAX_SCAN_POINTS {
        return Err(Error::Contract(format!(
            "subset scan supports at most {MAX_SCAN_POINTS} points, got {n}"
        )));
    }
    let tables = SubsetTables::new(&envs, n);
    Ok((1..1usize << n)
        .map(|mask| {
            let (dev, mean) = tables.spread(mask);
            let invariant = dev <= tol;
            SubsetRow {
                mask: mask as u32,
                members: (0..n).filter(|i| mask >> i & 1 == 1).collect(),
                invariant,
                common_mean: if invariant { mean } else { None },
            }
        })
        .collect())
}

/// Conditional means of one subset in each environment.
pub fn subset_means(envs: &[Environment], subset: &[usize]) -> Result<Vec<Option<f64>>> {
    let space = shared_space(envs)?;
    if subset.is_empty() || subset.iter().any(|&i| i >= space.len_x()) {
        return Err(Error::Contract(
            "subset must be non-empty and in range".into(),
        ));
    }
    let tables = SubsetTables::new(envs, space.len_x());
    Ok(tables.means(mask_of(subset)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{piecewise_pi_env, section4_env, two_bit_env};

    fn pair(alpha: f64, b1: f64, b2: f64) -> Vec<Environment> {
        vec![
            two_bit_env(alpha, b1).unwrap(),
            two_bit_env(alpha, b2).unwrap(),
        ]
    }

    #[test]
    fn x1_partition_is_invariant() {
        let envs = pair(0.1, 0.2, 0.25);
        let p = Partition::by_key(OutcomeSpace::two_bit(), |x| x[0]);
        let r = is_invariant_partition(&p, &envs, EXACT_TOL).unwrap();
        assert!(r.invariant);
        assert!((r.cells[0].means[0].unwrap() - 0.8).abs() < 1e-12);
        assert!((r.cells[1].means[1].unwrap() + 0.8).abs() < 1e-12);
    }

    #[test]
    fn x2_partition_is_not_invariant() {
        let envs = pair(0.1, 0.2, 0.25);
        let p = Partition::by_key(OutcomeSpace::two_bit(), |x| x[1]);
        let r = is_invariant_partition(&p, &envs, EXACT_TOL).unwrap();
        assert!(!r.invariant);
        assert!((r.cells[0].means[0].unwrap() - 0.6).abs() < 1e-12);
        assert!((r.cells[0].means[1].unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_partition_has_zero_means() {
        let envs = pair(0.1, 0.2, 0.25);
        let p = Partition::by_key(OutcomeSpace::two_bit(), |x| x[0] * x[1]);
        let r = is_invariant_partition(&p, &envs, EXACT_TOL).unwrap();
        assert!(r.invariant);
        for c in &r.cells {
            for m in &c.means {
                assert!(m.unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_predictors_for_square_pair() {
        let set =
            invariant_predictors_full(&pair(0.1, 0.2, 0.25), Loss::Square, EXACT_TOL).unwrap();
        assert_eq!(set.partitions_checked, 15);
        assert_eq!(set.len(), 2);
        let s = OutcomeSpace::two_bit();
        let x1 = Predictor::linear(s.clone(), &[0.8, 0.0], 0.0).unwrap();
        assert!(set.contains(&Predictor::zero(s), 1e-12));
        assert!(set.contains(&x1, 1e-12));
        let zero = set.predictors().position(|f| f.max_norm() < 1e-12).unwrap();
        assert_eq!(set.members[zero].witness_count, 2);
    }

    #[test]
    fn two_predictors_for_logistic_pair() {
        let set =
            invariant_predictors_full(&pair(0.05, 0.1, 0.2), Loss::Logistic, EXACT_TOL).unwrap();
        assert_eq!(set.len(), 2);
        let w = (0.95f64 / 0.05).ln();
        let f = Predictor::linear(OutcomeSpace::two_bit(), &[w, 0.0], 0.0).unwrap();
        assert!(set.contains(&f, 1e-9));
        assert!((w - 2.9444).abs() < 1e-3);
    }

    #[test]
    fn separable_cells_are_skipped() {
        // α = 0 makes the x1 cells pure
        let space = OutcomeSpace::two_bit();
        let build = |beta: f64| {
            let mut pmf = Vec::new();
            for x in space.x_points() {
                for &y in space.y_points() {
                    let p2 = if f64::from(x[1]) == y {
                        1.0 - beta
                    } else {
                        beta
                    };
                    pmf.push(if f64::from(x[0]) == y { 0.5 * p2 } else { 0.0 });
                }
            }
            Environment::new(space.clone(), pmf, format!("{beta}"), 1e-12).unwrap()
        };
        let envs = vec![build(0.2), build(0.3)];
        let set = invariant_predictors_full(&envs, Loss::Logistic, EXACT_TOL).unwrap();
        assert!(set.skipped_total >= 1);
        assert!(set.skipped.iter().all(|s| s.mean.abs() == 1.0));
        assert!(set.contains(&Predictor::zero(space), 0.0));
    }

    #[test]
    fn section4_predictors_use_one_coordinate() {
        let envs = vec![section4_env(-0.1).unwrap(), section4_env(0.2).unwrap()];
        let set = invariant_predictors_full(&envs, Loss::Square, EXACT_TOL).unwrap();
        assert_eq!(set.partitions_checked, 21147);
        assert!(!set.is_empty());
        for f in set.predictors() {
            assert!(!(f.depends_on(0, 1e-9) && f.depends_on(1, 1e-9)), "{f}");
            for &v in f.values() {
                let ok = [0.0, 0.3, -0.3, 0.15, -0.15]
                    .iter()
                    .any(|c| (v - c).abs() < 1e-9);
                assert!(ok, "{v}");
            }
        }
        let x1 = Predictor::linear(OutcomeSpace::ternary_pair(), &[0.3, 0.0], 0.0).unwrap();
        let x2 = Predictor::linear(OutcomeSpace::ternary_pair(), &[0.0, 0.3], 0.0).unwrap();
        assert!(set.contains(&x1, 1e-9));
        assert!(set.contains(&x2, 1e-9));
    }

    #[test]
    fn selection_picks_lowest_loss() {
        let f = irm_select(&pair(0.25, 0.1, 0.2), Loss::Square, EXACT_TOL).unwrap();
        assert!((f.values()[0] - 0.5).abs() < 1e-12);
        assert!((f.values()[3] + 0.5).abs() < 1e-12);
        let f = irm_select(&pair(0.1, 0.2, 0.25), Loss::Square, EXACT_TOL).unwrap();
        assert!((f.values()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perturbed_environments_keep_only_zero() {
        let envs: Vec<Environment> = [(0.245, 0.105), (0.255, 0.195), (0.251, 0.302)]
            .iter()
            .map(|&(a, b)| two_bit_env(a, b).unwrap())
            .collect();
        let set = invariant_predictors_full(&envs, Loss::Square, 1e-6).unwrap();
        assert_eq!(set.len(), 1);
        let f = irm_select(&envs, Loss::Square, 1e-6).unwrap();
        assert!(f.max_norm() < 1e-12);
    }

    #[test]
    fn empty_set_is_a_typed_result() {
        let space = OutcomeSpace::two_bit();
        let a = two_bit_env(0.1, 0.2).unwrap();
        // shift the label balance so even the whole space disagrees
        let mut pmf = a.pmf().to_vec();
        pmf[0] += 0.05;
        pmf[1] -= 0.05;
        let b = Environment::new(space, pmf, "skewed", 1e-12).unwrap();
        let err = irm_select(&[a, b], Loss::Square, 1e-9).unwrap_err();
        assert_eq!(err, Error::NoInvariantPredictor);
    }

    #[test]
    fn counterexample_breaks_on_new_environment() {
        let train: Vec<Environment> = [0.05, 0.10, 0.15, 0.20, 0.25]
            .iter()
            .map(|&t| piecewise_pi_env(t).unwrap())
            .collect();
        let f1 = Predictor::linear(OutcomeSpace::two_bit(), &[0.8, 0.0], 0.0).unwrap();
        let set = invariant_predictors_full(&train, Loss::Square, EXACT_TOL).unwrap();
        assert!(set.contains(&f1, 1e-9));
        let p = Partition::by_key(OutcomeSpace::two_bit(), |x| x[0]);
        assert!(
            is_invariant_partition(&p, &train, EXACT_TOL)
                .unwrap()
                .invariant
        );
        let mut wider = train.clone();
        wider.push(piecewise_pi_env(0.5).unwrap());
        assert!(
            !is_invariant_partition(&p, &wider, EXACT_TOL)
                .unwrap()
                .invariant
        );
    }

    #[test]
    fn two_bit_scan_matches_table() {
        let fam = EnvironmentFamily::two_bit(0.25).unwrap();
        let rows = subset_invariance_scan(&fam, &[0.1, 0.3, 0.45, 0.6, 0.85], EXACT_TOL).unwrap();
        assert_eq!(rows.len(), 15);
        let yes: Vec<(u32, f64)> = rows
            .iter()
            .filter(|r| r.invariant)
            .map(|r| (r.mask, r.common_mean.unwrap()))
            .collect();
        // points: 0=(1,1) 1=(1,-1) 2=(-1,1) 3=(-1,-1)
        let expected = [
            (0b0011, 0.5),
            (0b0110, 0.0),
            (0b1001, 0.0),
            (0b1100, -0.5),
            (0b1111, 0.0),
        ];
        assert_eq!(yes.len(), 5);
        for (mask, mean) in expected {
            let (_, m) = yes.iter().find(|(k, _)| *k == mask).unwrap();
            assert!((m - mean).abs() < 1e-12);
        }
        assert!(!rows[0].invariant);
    }

    #[test]
    fn section4_scan_count() {
        let rows = subset_invariance_scan(
            &EnvironmentFamily::Section4,
            &[-0.12, 0.03, 0.11, 0.2, 0.29],
            EXACT_TOL,
        )
        .unwrap();
        assert_eq!(rows.len(), 511);
        let inv: Vec<&SubsetRow> = rows.iter().filter(|r| r.invariant).collect();
        assert_eq!(inv.len(), 37);
        let nonzero = inv
            .iter()
            .filter(|r| r.common_mean.unwrap().abs() > 1e-9)
            .count();
        assert_eq!(nonzero, 6);
    }

    #[test]
    fn scan_validates_inputs() {
        let fam = EnvironmentFamily::two_bit(0.25).unwrap();
        assert!(matches!(
            subset_invariance_scan(&fam, &[0.1, 0.2], EXACT_TOL),
            Err(Error::Contract(_))
        ));
    }
}
