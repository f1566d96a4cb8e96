//! Losses, predictors, exact population risk, pointwise-optimal (ERM)
//! predictors and out-of-distribution sup-risk over a family.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{same_space, shared_space, Environment, EnvironmentFamily, OutcomeSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `½(ŷ − y)²`
    Square,
    /// `log(1 + exp(−ŷ·y))`, labels in {−1, +1}
    Logistic,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Loss {
    pub fn value(self, yhat: f64, y: f64) -> f64 {
        match self {
            Loss::Square => 0.5 * (yhat - y) * (yhat - y),
            Loss::Logistic => softplus(-yhat * y),
        }
    }

    /// `∂ℓ/∂ŷ`
    pub fn d1(self, yhat: f64, y: f64) -> f64 {
        match self {
            Loss::Square => yhat - y,
            Loss::Logistic => -y * sigmoid(-yhat * y),
        }
    }

    /// `∂²ℓ/∂ŷ²`
    pub fn d2(self, yhat: f64, y: f64) -> f64 {
        match self {
            Loss::Square => 1.0,
            Loss::Logistic => {
                let s = yhat * y;
                sigmoid(s) * sigmoid(-s)
            }
        }
    }

    /// `∂³ℓ/∂ŷ³` (labels in {−1, +1} for logistic)
    pub fn d3(self, yhat: f64, y: f64) -> f64 {
        match self {
            Loss::Square => 0.0,
            Loss::Logistic => {
                let s = yhat * y;
                let (p, q) = (sigmoid(s), sigmoid(-s));
                y * p * q * (q - p)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Square => "square",
            Loss::Logistic => "logistic",
        }
    }

    pub(crate) fn check_space(self, space: &OutcomeSpace) -> Result<()> {
        if self == Loss::Logistic {
            if let Some(&y) = space.y_points().iter().find(|&&y| y != 1.0 && y != -1.0) {
                return Err(Error::NonBinaryLabel(y));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" | "sq" => Ok(Loss::Square),
            "logistic" | "log" => Ok(Loss::Logistic),
            other => Err(Error::Contract(format!("unknown loss `{other}`"))),
        }
    }
}

/// A real-valued table over the input points of an outcome space.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    space: Arc<OutcomeSpace>,
    values: Vec<f64>,
}

impl Predictor {
    pub fn new(space: Arc<OutcomeSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len_x() {
            return Err(Error::Contract(format!(
                "predictor has {} values for {} input points",
                values.len(),
                space.len_x()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "predictor value {v} is not finite"
            )));
        }
        Ok(Predictor { space, values })
    }

    pub fn zero(space: Arc<OutcomeSpace>) -> Self {
        let values = vec![0.0; space.len_x()];
        Predictor { space, values }
    }

    /// `x ↦ constant + Σ_j coeffs[j]·x_j`.
    pub fn linear(space: Arc<OutcomeSpace>, coeffs: &[f64], constant: f64) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::Contract(format!(
                "{} coefficients for {}-dimensional inputs",
                coeffs.len(),
                space.dim()
            )));
        }
        let values = space
            .x_points()
            .iter()
            .map(|x| {
                constant
                    + x.iter()
                        .zip(coeffs)
                        .map(|(&c, w)| w * f64::from(c))
                        .sum::<f64>()
            })
            .collect();
        Predictor::new(space, values)
    }

    pub fn from_fn<F>(space: Arc<OutcomeSpace>, f: F) -> Result<Self>
    where
        F: Fn(&[i32]) -> f64,
    {
        let values = space.x_points().iter().map(|x| f(x)).collect();
        Predictor::new(space, values)
    }

    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn max_distance(&self, other: &Predictor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `f(x) = −f(−x)` wherever `−x` is a point of the space.
    pub fn is_odd(&self, tol: f64) -> bool {
        (0..self.values.len()).all(|i| match self.space.negation(i) {
            Some(j) => (self.values[i] + self.values[j]).abs() <= tol,
            None => true,
        })
    }

    /// `(f(x) − f(−x)) / 2`; points without a negation keep their value.
    pub fn odd_part(&self) -> Predictor {
        let values = (0..self.values.len())
            .map(|i| match self.space.negation(i) {
                Some(j) => 0.5 * (self.values[i] - self.values[j]),
                None => self.values[i],
            })
            .collect();
        Predictor {
            space: self.space.clone(),
            values,
        }
    }

    /// Whether changing coordinate `coord` alone can change the prediction.
    pub fn depends_on(&self, coord: usize, tol: f64) -> bool {
        let xs = self.space.x_points();
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                let differs_only_there = xs[i]
                    .iter()
                    .zip(&xs[j])
                    .enumerate()
                    .all(|(k, (a, b))| (k == coord) != (a == b));
                if differs_only_there && (self.values[i] - self.values[j]).abs() > tol {
                    return true;
                }
            }
        }
        false
    }

    pub fn scaled(&self, c: f64) -> Predictor {
        Predictor {
            space: self.space.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<String> = (0..self.values.len())
            .map(|i| format!("{}: {:.4}", self.space.format_point(i), self.values[i]))
            .collect();
        write!(f, "[{}]", cells.join(", "))
    }
}

/// Lexicographic order where coordinates within `tol` compare equal.
pub fn lex_cmp(a: &[f64], b: &[f64], tol: f64) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > tol {
            return x.total_cmp(y);
        }
    }
    a.len().cmp(&b.len())
}

/// Total order for reporting value tables: lexicographic on values rounded to
/// 1e-6, then exact. Rounding keeps solver noise from reordering near-ties.
pub fn canonical_cmp(a: &[f64], b: &[f64]) -> Ordering {
    let key = |v: &[f64]| -> Vec<i64> { v.iter().map(|x| (x * 1e6).round() as i64).collect() };
    key(a)
        .cmp(&key(b))
        .then_with(|| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then(a.len().cmp(&b.len()))
}

fn check_pair(f: &Predictor, e: &Environment) -> Result<()> {
    if same_space(f.space(), e.space()) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

/// `L_e(f) = Σ_{x,y} P_e(x,y)·ℓ(f(x), y)`.
pub fn population_loss(f: &Predictor, e: &Environment, loss: Loss) -> Result<f64> {
    check_pair(f, e)?;
    loss.check_space(e.space())?;
    let ys = e.space().y_points();
    let mut acc = 0.0;
    for (i, &v) in f.values().iter().enumerate() {
        for (p, &y) in e.row(i).iter().zip(ys) {
            if *p != 0.0 {
                acc += p * loss.value(v, y);
            }
        }
    }
    Ok(acc)
}

/// Sum of population losses over several environments.
pub fn total_loss(f: &Predictor, envs: &[Environment], loss: Loss) -> Result<f64> {
    envs.iter().map(|e| population_loss(f, e, loss)).sum()
}

/// `E_e[Y | X ∈ subset]`, or `None` when `P_e(X ∈ subset) = 0`.
pub fn conditional_mean(e: &Environment, subset: &[usize]) -> Result<Option<f64>> {
    if subset.is_empty() {
        return Err(Error::Contract(
            "conditional mean over an empty subset".into(),
        ));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= e.space().len_x()) {
        return Err(Error::Contract(format!("input index {i} is out of range")));
    }
    let num: f64 = subset.iter().map(|&i| e.label_moment(i)).sum();
    let den: f64 = subset.iter().map(|&i| e.marginal_x(i)).sum();
    Ok((den > 0.0).then(|| num / den))
}

/// The minimizer of `E[ℓ(w, Y)]` over scalar `w` given `E[Y] = mean`
/// (labels in {−1, +1} for logistic).
pub fn pointwise_optimal(mean: f64, loss: Loss) -> Result<f64> {
    match loss {
        Loss::Square => Ok(mean),
        Loss::Logistic => {
            if mean.abs() > 1.0 {
                Err(Error::Domain {
                    name: "mean",
                    value: mean,
                    domain: "[-1, 1]",
                })
            } else if mean.abs() == 1.0 {
                Err(Error::Separable { mean })
            } else {
                Ok(((1.0 + mean) / (1.0 - mean)).ln())
            }
        }
    }
}

/// Unrestricted minimizer of the summed population losses: pointwise
/// optimum of the pooled conditional mean; points with no pooled mass get 0.
pub fn erm_solve(envs: &[Environment], loss: Loss) -> Result<Predictor> {
    let space = shared_space(envs)?;
    loss.check_space(&space)?;
    let values = (0..space.len_x())
        .map(|i| {
            let den: f64 = envs.iter().map(|e| e.marginal_x(i)).sum();
            if den > 0.0 {
                let num: f64 = envs.iter().map(|e| e.label_moment(i)).sum();
                pointwise_optimal(num / den, loss)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Predictor::new(space, values)
}

/// Evenly spaced parameters across an open interval, inset from both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub points: usize,
    pub inset: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            points: 2001,
            inset: 1e-4,
        }
    }
}

impl SweepGrid {
    pub fn params(&self, (lo, hi): (f64, f64)) -> Result<Vec<f64>> {
        if self.points < 2 {
            return Err(Error::Contract(format!(
                "sweep grid needs at least 2 points, got {}",
                self.points
            )));
        }
        let (a, b) = (lo + self.inset, hi - self.inset);
        if !(a < b) {
            return Err(Error::Contract(format!(
                "inset {} leaves no room inside ({lo}, {hi})",
                self.inset
            )));
        }
        let n = self.points - 1;
        Ok((0..=n)
            .map(|k| {
                if k == n {
                    b
                } else {
                    a + (b - a) * k as f64 / n as f64
                }
            })
            .collect())
    }
}

/// Worst-case population loss over a family.
#[derive(Debug, Clone, PartialEq)]
pub struct SupRisk {
    pub value: f64,
    /// Parameter (or list index) attaining the maximum.
    pub argmax: f64,
    pub evaluated: usize,
    /// The loss is affine in the free parameter, so the grid endpoints bound the supremum.
    pub endpoint_bound: bool,
}

/// `max_e L_e(f)` over the family evaluated on `grid`.
pub fn ood_sup_risk(
    f: &Predictor,
    family: &EnvironmentFamily,
    loss: Loss,
    grid: SweepGrid,
) -> Result<SupRisk> {
    let (params, envs) = family_grid(family, grid)?;
    let mut best = SupRisk {
        value: f64::NEG_INFINITY,
        argmax: f64::NAN,
        evaluated: 0,
        endpoint_bound: matches!(family, EnvironmentFamily::TwoBit { .. }),
    };
    for (p, e) in params.iter().zip(&envs) {
        let l = population_loss(f, e, loss)?;
        best.evaluated += 1;
        if l > best.value {
            best.value = l;
            best.argmax = *p;
        }
    }
    Ok(best)
}

fn family_grid(
    family: &EnvironmentFamily,
    grid: SweepGrid,
) -> Result<(Vec<f64>, Vec<Environment>)> {
    match family {
        EnvironmentFamily::Custom(envs) => {
            if envs.is_empty() {
                return Err(Error::Contract("empty environment list".into()));
            }
            Ok(((0..envs.len()).map(|i| i as f64).collect(), envs.clone()))
        }
        _ => {
            let domain = family.param_domain().expect("parametric family");
            let params = grid.params(domain)?;
            let envs = family.members(&params)?;
            Ok((params, envs))
        }
    }
}

/// Population losses of several predictors across family parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySweep {
    pub params: Vec<f64>,
    /// `losses[k][j]` is the loss of predictor `j` at `params[k]`.
    pub losses: Vec<Vec<f64>>,
}

pub fn sweep_losses(
    family: &EnvironmentFamily,
    params: &[f64],
    predictors: &[Predictor],
    loss: Loss,
) -> Result<FamilySweep> {
    let losses = params
        .iter()
        .map(|&p| {
            let e = family.at(p)?;
            predictors
                .iter()
                .map(|f| population_loss(f, &e, loss))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilySweep {
        params: params.to_vec(),
        losses,
    })
}
