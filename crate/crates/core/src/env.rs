//! Finite outcome spaces, environments (exact joint pmfs) and the
//! parameterized environment families used throughout the crate.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total-mass tolerance for environments built by the constructors.
pub const CONSTRUCTOR_MASS_TOL: f64 = 1e-12;

/// Ordered input points (small integer vectors) and output values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    x_points: Vec<Vec<i32>>,
    y_points: Vec<f64>,
}

impl OutcomeSpace {
    /// Partition enumeration is capped at this many input points (Bell(12) ≈ 4.2M).
    pub const MAX_POINTS: usize = 12;

    pub fn new(x_points: Vec<Vec<i32>>, y_points: Vec<f64>) -> Result<Self> {
        if x_points.is_empty() {
            return Err(Error::Space("x_points is empty".into()));
        }
        if x_points.len() > Self::MAX_POINTS {
            return Err(Error::Space(format!(
                "{} input points exceeds the cap of {}",
                x_points.len(),
                Self::MAX_POINTS
            )));
        }
        let dim = x_points[0].len();
        if dim == 0 {
            return Err(Error::Space(
                "input points must have at least one coordinate".into(),
            ));
        }
        for (i, x) in x_points.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Space(format!(
                    "x_points[{i}] has {} coordinates, expected {dim}",
                    x.len()
                )));
            }
            if x_points[..i].contains(x) {
                return Err(Error::Space(format!("x_points[{i}] = {x:?} is duplicated")));
            }
        }
        if y_points.is_empty() {
            return Err(Error::Space("y_points is empty".into()));
        }
        for (i, &y) in y_points.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Space(format!("y_points[{i}] is not finite")));
            }
            if y_points[..i].contains(&y) {
                return Err(Error::Space(format!("y_points[{i}] = {y} is duplicated")));
            }
        }
        Ok(OutcomeSpace { x_points, y_points })
    }

    /// `{−1,+1}²` in the order (1,1), (1,−1), (−1,1), (−1,−1); labels (−1, +1).
    pub fn two_bit() -> Arc<OutcomeSpace> {
        static SPACE: OnceLock<Arc<OutcomeSpace>> = OnceLock::new();
        SPACE
            .get_or_init(|| {
                Arc::new(
                    OutcomeSpace::new(
                        vec![vec![1, 1], vec![1, -1], vec![-1, 1], vec![-1, -1]],
                        vec![-1.0, 1.0],
                    )
                    .expect("two-bit space is valid"),
                )
            })
            .clone()
    }

    /// `{−1,0,+1}²` with x1 varying slowest; labels (−1, +1).
    pub fn ternary_pair() -> Arc<OutcomeSpace> {
        static SPACE: OnceLock<Arc<OutcomeSpace>> = OnceLock::new();
        SPACE
            .get_or_init(|| {
                let mut xs = Vec::with_capacity(9);
                for x1 in -1..=1 {
                    for x2 in -1..=1 {
                        xs.push(vec![x1, x2]);
                    }
                }
                Arc::new(OutcomeSpace::new(xs, vec![-1.0, 1.0]).expect("ternary space is valid"))
            })
            .clone()
    }

    pub fn x_points(&self) -> &[Vec<i32>] {
        &self.x_points
    }

    pub fn y_points(&self) -> &[f64] {
        &self.y_points
    }

    pub fn len_x(&self) -> usize {
        self.x_points.len()
    }

    pub fn len_y(&self) -> usize {
        self.y_points.len()
    }

    /// Number of coordinates of each input point.
    pub fn dim(&self) -> usize {
        self.x_points[0].len()
    }

    pub fn index_of(&self, x: &[i32]) -> Option<usize> {
        self.x_points.iter().position(|p| p.as_slice() == x)
    }

    /// Index of `−x` for the point at `i`, if present.
    pub fn negation(&self, i: usize) -> Option<usize> {
        let neg: Vec<i32> = self.x_points[i].iter().map(|c| -c).collect();
        self.index_of(&neg)
    }

    /// Every point's negation is also a point.
    pub fn is_sign_symmetric(&self) -> bool {
        (0..self.len_x()).all(|i| self.negation(i).is_some())
    }

    /// Labels are a subset of {−1, +1}.
    pub fn is_binary(&self) -> bool {
        self.y_points.iter().all(|&y| y == 1.0 || y == -1.0)
    }

    pub fn format_point(&self, i: usize) -> String {
        let coords: Vec<String> = self.x_points[i].iter().map(|c| c.to_string()).collect();
        format!("({})", coords.join(","))
    }
}

/// Parameters of the family member an environment was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FamilyParams {
    TwoBit { alpha: f64, beta: f64 },
    Section4 { theta: f64 },
    PiecewisePi { theta: f64, alpha: f64, beta: f64 },
}

/// An exact joint probability mass table over `X × Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    space: Arc<OutcomeSpace>,
    pmf: Vec<f64>,
    label: String,
    params: Option<FamilyParams>,
}

impl Environment {
    /// Builds an environment from a row-major pmf (`x` rows, `y` columns),
    /// validating non-negativity and total mass within `mass_tol`.
    pub fn new(
        space: Arc<OutcomeSpace>,
        pmf: Vec<f64>,
        label: impl Into<String>,
        mass_tol: f64,
    ) -> Result<Self> {
        let label = label.into();
        let expected = space.len_x() * space.len_y();
        if pmf.len() != expected {
            return Err(Error::Validation {
                entry: label,
                reason: format!("pmf has {} entries, expected {expected}", pmf.len()),
            });
        }
        for (k, &p) in pmf.iter().enumerate() {
            let (i, j) = (k / space.len_y(), k % space.len_y());
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Validation {
                    entry: format!("{label} pmf[{i}][{j}]"),
                    reason: format!("mass {p} is negative or not finite"),
                });
            }
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > mass_tol {
            return Err(Error::Validation {
                entry: label,
                reason: format!("total mass {total} differs from 1 by more than {mass_tol:e}"),
            });
        }
        Ok(Environment {
            space,
            pmf,
            label,
            params: None,
        })
    }

    pub fn with_params(mut self, params: FamilyParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> Option<FamilyParams> {
        self.params
    }

    /// Row-major pmf.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mass(&self, x: usize, y: usize) -> f64 {
        self.pmf[x * self.space.len_y() + y]
    }

    /// Masses `P(X = x, Y = y)` for every `y`, in `y_points` order.
    pub fn row(&self, x: usize) -> &[f64] {
        let ny = self.space.len_y();
        &self.pmf[x * ny..(x + 1) * ny]
    }

    pub fn marginal_x(&self, x: usize) -> f64 {
        self.row(x).iter().sum()
    }

    /// `Σ_y y · P(X = x, Y = y)`.
    pub fn label_moment(&self, x: usize) -> f64 {
        self.row(x)
            .iter()
            .zip(self.space.y_points())
            .map(|(p, y)| p * y)
            .sum()
    }

    /// `E[h(X, Y)]`.
    pub fn expectation<F>(&self, mut h: F) -> f64
    where
        F: FnMut(&[i32], f64) -> f64,
    {
        let mut acc = 0.0;
        for (i, x) in self.space.x_points().iter().enumerate() {
            for (j, &y) in self.space.y_points().iter().enumerate() {
                let p = self.mass(i, j);
                if p != 0.0 {
                    acc += p * h(x, y);
                }
            }
        }
        acc
    }

    /// `weight · self + (1 − weight) · other`.
    pub fn mixture(&self, other: &Environment, weight: f64) -> Result<Environment> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Domain {
                name: "weight",
                value: weight,
                domain: "[0, 1]",
            });
        }
        let pmf = self
            .pmf
            .iter()
            .zip(&other.pmf)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        Environment::new(
            self.space.clone(),
            pmf,
            format!("{weight}*{}+{}*{}", self.label, 1.0 - weight, other.label),
            CONSTRUCTOR_MASS_TOL,
        )
    }
}

/// Structural equality of outcome spaces, short-circuiting on shared pointers.
pub fn same_space(a: &Arc<OutcomeSpace>, b: &Arc<OutcomeSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Checks that all environments live on one outcome space and returns it.
pub fn shared_space(envs: &[Environment]) -> Result<Arc<OutcomeSpace>> {
    let first = envs
        .first()
        .ok_or_else(|| Error::Contract("at least one environment is required".into()))?;
    if envs.iter().any(|e| !same_space(first.space(), e.space())) {
        return Err(Error::SpaceMismatch);
    }
    Ok(first.space().clone())
}

fn check_open(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    domain: &'static str,
) -> Result<()> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain,
        })
    }
}

/// Two-bit environment: `Y ~ Rad(½)`, `X1 = Y` flipped w.p. `alpha`,
/// `X2 = Y` flipped w.p. `beta`, independently.
pub fn two_bit_env(alpha: f64, beta: f64) -> Result<Environment> {
    check_open("alpha", alpha, 0.0, 1.0, "(0, 1)")?;
    check_open("beta", beta, 0.0, 1.0, "(0, 1)")?;
    let space = OutcomeSpace::two_bit();
    let keep = |agree: bool, flip: f64| if agree { 1.0 - flip } else { flip };
    let mut pmf = Vec::with_capacity(8);
    for x in space.x_points() {
        for &y in space.y_points() {
            let y = y as i32;
            pmf.push(0.5 * keep(x[0] == y, alpha) * keep(x[1] == y, beta));
        }
    }
    Ok(Environment::new(
        space,
        pmf,
        format!("({alpha},{beta})"),
        CONSTRUCTOR_MASS_TOL,
    )?
    .with_params(FamilyParams::TwoBit { alpha, beta }))
}

/// The zero-conditional-mean perturbation `g_θ(x1, x2)` on `{−1,0,1}²`.
pub fn section4_perturbation(theta: f64, x1: i32, x2: i32) -> f64 {
    let t = theta;
    let a = t * (t + 2.0 / 3.0);
    let b = t * (2.0 / 3.0 - 2.0 * t);
    let c = 3.0 * t * t;
    match (x1, x2) {
        (-1, -1) => a,
        (-1, 0) => -b,
        (-1, 1) => c,
        (0, -1) => -b,
        (0, 0) => 0.0,
        (0, 1) => b,
        (1, -1) => -c,
        (1, 0) => b,
        (1, 1) => -a,
        _ => panic!("({x1},{x2}) is not in {{-1,0,1}}^2"),
    }
}

/// Three-valued environment: `X1` uniform on {−1,0,1}, independent `X2` with
/// `P(±1) = 1/3 − θ`, `P(0) = 1/3 + 2θ`, and `E[Y | x] = 0.3(x1 + x2) + g_θ(x)`.
pub fn section4_env(theta: f64) -> Result<Environment> {
    check_open("theta", theta, -1.0 / 6.0, 1.0 / 3.0, "(-1/6, 1/3)")?;
    let space = OutcomeSpace::ternary_pair();
    let p2 = |x2: i32| {
        if x2 == 0 {
            1.0 / 3.0 + 2.0 * theta
        } else {
            1.0 / 3.0 - theta
        }
    };
    let mut pmf = Vec::with_capacity(18);
    for x in space.x_points() {
        let (x1, x2) = (x[0], x[1]);
        let m = 0.3 * f64::from(x1 + x2) + section4_perturbation(theta, x1, x2);
        if m.abs() > 1.0 {
            return Err(Error::Construction(format!(
                "conditional mean {m} at ({x1},{x2}) exceeds 1 in magnitude"
            )));
        }
        let px = p2(x2) / 3.0;
        for &y in space.y_points() {
            pmf.push(px * (1.0 + y * m) / 2.0);
        }
    }
    Ok(
        Environment::new(space, pmf, format!("θ={theta}"), CONSTRUCTOR_MASS_TOL)?
            .with_params(FamilyParams::Section4 { theta }),
    )
}

/// Continuous piecewise-linear path through two-bit environments:
/// `(1/10, 6θ/5)` for `θ ≤ 1/4`, then `((6θ−1)/5, 3/10)`.
pub fn piecewise_pi_env(theta: f64) -> Result<Environment> {
    check_open("theta", theta, 0.0, 1.0, "(0, 1)")?;
    let (alpha, beta) = piecewise_pi_params(theta);
    let env = two_bit_env(alpha, beta)?;
    let Environment { space, pmf, .. } = env;
    Ok(Environment {
        space,
        pmf,
        label: format!("θ={theta}"),
        params: Some(FamilyParams::PiecewisePi { theta, alpha, beta }),
    })
}

/// `(α, β)` reached by the piecewise path at `theta`.
pub fn piecewise_pi_params(theta: f64) -> (f64, f64) {
    if theta <= 0.25 {
        (0.1, 6.0 * theta / 5.0)
    } else {
        ((6.0 * theta - 1.0) / 5.0, 0.3)
    }
}

/// A parameterized set of environments.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentFamily {
    /// `E_α`: two-bit environments with `α` fixed and `β ∈ (0,1)` free.
    TwoBit { alpha: f64 },
    /// Three-valued environments with `θ ∈ (−1/6, 1/3)`.
    Section4,
    /// The piecewise-linear path with `θ ∈ (0, 1)`.
    PiecewiseLinearPi,
    /// An explicit finite list.
    Custom(Vec<Environment>),
}

impl EnvironmentFamily {
    pub fn two_bit(alpha: f64) -> Result<Self> {
        check_open("alpha", alpha, 0.0, 1.0, "(0, 1)")?;
        Ok(EnvironmentFamily::TwoBit { alpha })
    }

    /// Open parameter interval, or `None` for explicit lists.
    pub fn param_domain(&self) -> Option<(f64, f64)> {
        match self {
            EnvironmentFamily::TwoBit { .. } | EnvironmentFamily::PiecewiseLinearPi => {
                Some((0.0, 1.0))
            }
            EnvironmentFamily::Section4 => Some((-1.0 / 6.0, 1.0 / 3.0)),
            EnvironmentFamily::Custom(_) => None,
        }
    }

    /// Family member at parameter `p` (for `Custom`, `p` is rounded to an index).
    pub fn at(&self, p: f64) -> Result<Environment> {
        match self {
            EnvironmentFamily::TwoBit { alpha } => two_bit_env(*alpha, p),
            EnvironmentFamily::Section4 => section4_env(p),
            EnvironmentFamily::PiecewiseLinearPi => piecewise_pi_env(p),
            EnvironmentFamily::Custom(envs) => {
                let idx = p.round();
                if idx < 0.0 || idx as usize >= envs.len() {
                    return Err(Error::Domain {
                        name: "index",
                        value: p,
                        domain: "list indices",
                    });
                }
                Ok(envs[idx as usize].clone())
            }
        }
    }

    pub fn members(&self, params: &[f64]) -> Result<Vec<Environment>> {
        params.iter().map(|&p| self.at(p)).collect()
    }

    pub fn space(&self) -> Arc<OutcomeSpace> {
        match self {
            EnvironmentFamily::TwoBit { .. } | EnvironmentFamily::PiecewiseLinearPi => {
                OutcomeSpace::two_bit()
            }
            EnvironmentFamily::Section4 => OutcomeSpace::ternary_pair(),
            EnvironmentFamily::Custom(envs) => envs
                .first()
                .map(|e| e.space().clone())
                .unwrap_or_else(OutcomeSpace::two_bit),
        }
    }
}

impl fmt::Display for EnvironmentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvironmentFamily::TwoBit { alpha } => write!(f, "two-bit(alpha={alpha})"),
            EnvironmentFamily::Section4 => f.write_str("section4"),
            EnvironmentFamily::PiecewiseLinearPi => f.write_str("piecewise-pi"),
            EnvironmentFamily::Custom(envs) => write!(f, "custom({} environments)", envs.len()),
        }
    }
}
