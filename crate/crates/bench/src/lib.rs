//! Shared fixtures for the solver benchmarks.

use irm_core::{section4_env, two_bit_env, Environment};

/// The alpha = 0.1 pair with four odd scalar solutions.
pub fn failure_pair() -> Vec<Environment> {
    [0.2, 0.25]
        .iter()
        .map(|&b| two_bit_env(0.1, b).unwrap())
        .collect()
}

/// Two members of the three-valued family on `{-1,0,1}^2`.
pub fn ternary_pair() -> Vec<Environment> {
    [-0.1, 0.05]
        .iter()
        .map(|&t| section4_env(t).unwrap())
        .collect()
}

/// `n` two-bit environments at a shared alpha, betas evenly spread over (0, 1).
pub fn two_bit_spread(alpha: f64, n: usize) -> Vec<Environment> {
    (0..n)
        .map(|k| two_bit_env(alpha, (k as f64 + 0.5) / n as f64).unwrap())
        .collect()
}
