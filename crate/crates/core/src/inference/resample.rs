use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// Normalized probabilities from log-weights, by max-shift.
pub fn normalize(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if log_weights.iter().any(|w| w.is_nan()) || max == f64::NEG_INFINITY {
        return Err(Error::AllWeightsZero { generation: None });
    }
    let w: Vec<f64> = log_weights.iter().map(|&l| libm::exp(l - max)).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// `log((1/L) Σ exp(l))`, negative infinity when every weight is.
pub fn log_mean_exp(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || log_weights.is_empty() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = log_weights.iter().map(|&l| libm::exp(l - max)).sum();
    max + libm::log(s / log_weights.len() as f64)
}

pub(crate) fn draw_index<R: RngCore + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum short of one.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws index `l` with probability proportional to `exp(log_weights[l])`.
pub fn resample<R: RngCore + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    Ok(draw_index(&normalize(log_weights)?, rng))
}
