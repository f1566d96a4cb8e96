//! Linear predictor expressions such as `0.3*x2` or `0.5*x1 - 0.25*x2 + 0.1`.

use std::sync::Arc;

use anyhow::{bail, Result};
use irm_core::{OutcomeSpace, Predictor};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearExpr {
    /// `coeffs[i]` multiplies `x{i+1}`.
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            bail!("empty predictor expression");
        }
        let mut coeffs: Vec<f64> = Vec::new();
        let mut constant = 0.0;
        for term in split_terms(&s)? {
            let (sign, body) = match term.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, term.strip_prefix('+').unwrap_or(term)),
            };
            let (coef, var) = parse_term(body).map_err(|e| anyhow::anyhow!("in `{text}`: {e}"))?;
            match var {
                None => constant += sign * coef,
                Some(i) => {
                    if coeffs.len() <= i {
                        coeffs.resize(i + 1, 0.0);
                    }
                    coeffs[i] += sign * coef;
                }
            }
        }
        Ok(LinearExpr { coeffs, constant })
    }

    pub fn predictor(&self, space: &Arc<OutcomeSpace>) -> Result<Predictor> {
        if self.coeffs.len() > space.dim() {
            bail!(
                "expression uses x{} but points have {} coordinates",
                self.coeffs.len(),
                space.dim()
            );
        }
        let mut c = self.coeffs.clone();
        c.resize(space.dim(), 0.0);
        Ok(Predictor::linear(space.clone(), &c, self.constant)?)
    }
}

fn split_terms(s: &str) -> Result<Vec<&str>> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..bytes.len() {
        let c = bytes[i];
        let prev = bytes[i - 1];
        // a sign starts a new term unless it belongs to an exponent
        if (c == b'+' || c == b'-') && prev != b'e' && prev != b'E' && prev != b'*' {
            out.push(&s[start..i]);
            start = i;
        }
    }
    out.push(&s[start..]);
    if out.iter().any(|t| t.is_empty() || *t == "+" || *t == "-") {
        bail!("dangling operator in `{s}`");
    }
    Ok(out)
}

fn parse_var(s: &str) -> Option<usize> {
    let idx: usize = s.strip_prefix('x')?.parse().ok()?;
    idx.checked_sub(1)
}

fn parse_term(body: &str) -> Result<(f64, Option<usize>)> {
    let parts: Vec<&str> = body.split('*').collect();
    match parts.as_slice() {
        [one] => match parse_var(one) {
            Some(i) => Ok((1.0, Some(i))),
            None => Ok((parse_num(one)?, None)),
        },
        [a, b] => {
            if let Some(i) = parse_var(b) {
                Ok((parse_num(a)?, Some(i)))
            } else if let Some(i) = parse_var(a) {
                Ok((parse_num(b)?, Some(i)))
            } else {
                bail!("`{body}` is not coefficient*variable")
            }
        }
        _ => bail!("`{body}` is not linear"),
    }
}

fn parse_num(s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => bail!("`{s}` is not a number or variable x1, x2, ..."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> LinearExpr {
        LinearExpr::parse(s).unwrap()
    }

    #[test]
    fn parses_common_forms() {
        assert_eq!(
            p("0.3*x2"),
            LinearExpr {
                coeffs: vec![0.0, 0.3],
                constant: 0.0
            }
        );
        assert_eq!(
            p("x1"),
            LinearExpr {
                coeffs: vec![1.0],
                constant: 0.0
            }
        );
        assert_eq!(
            p("0.5 * x1 - 0.25*x2 + 0.1"),
            LinearExpr {
                coeffs: vec![0.5, -0.25],
                constant: 0.1
            }
        );
        assert_eq!(
            p("-x2*2"),
            LinearExpr {
                coeffs: vec![0.0, -2.0],
                constant: 0.0
            }
        );
        assert_eq!(
            p("1e-1*x1+2E+0"),
            LinearExpr {
                coeffs: vec![0.1],
                constant: 2.0
            }
        );
        assert_eq!(
            p("0"),
            LinearExpr {
                coeffs: vec![],
                constant: 0.0
            }
        );
    }

    #[test]
    fn repeated_terms_add_up() {
        assert_eq!(
            p("x1+x1-0.5*x1"),
            LinearExpr {
                coeffs: vec![1.5],
                constant: 0.0
            }
        );
    }

    #[test]
    fn rejects_nonlinear_and_garbage() {
        for bad in ["", "x1*x2", "x0", "y1", "0.3*", "1+", "2*3*x1", "nan"] {
            assert!(LinearExpr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn evaluates_on_space() {
        let space = OutcomeSpace::two_bit();
        let f = p("0.5*x1").predictor(&space).unwrap();
        assert_eq!(f.values(), &[0.5, 0.5, -0.5, -0.5]);
        assert!(p("x3").predictor(&space).is_err());
    }
}
