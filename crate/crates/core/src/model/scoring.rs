//! Answer-level scores composed from per-token discriminator outputs.

use crate::error::{Error, Result};
use crate::numerics::PROB_EPS;

/// Probability that the whole answer is human-written: the product of the
/// per-token outputs. The empty product is 1.
pub fn chain_probability(token_scores: &[f64]) -> f64 {
    token_scores.iter().product()
}

/// Length-normalized score: the geometric mean of the per-token outputs,
/// evaluated as `exp(mean(ln l_i))`.
pub fn geometric_mean_score(token_scores: &[f64]) -> Result<f64> {
    if token_scores.is_empty() {
        return Err(Error::Domain("geometric mean of an empty answer".into()));
    }
    let mean_log = token_scores.iter().map(|&l| l.max(PROB_EPS).ln()).sum::<f64>() / token_scores.len() as f64;
    Ok(mean_log.exp())
}
