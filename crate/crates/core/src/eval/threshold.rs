use serde::{Deserialize, Serialize};

use crate::error::EvalError;

/// Percentile of the validation scores used as a decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub percentile: u32,
    pub threshold: f64,
}

impl ThresholdRule {
    /// `score > threshold` means anomalous.
    pub fn decide(&self, score: f64) -> bool {
        score > self.threshold
    }
}

/// `p`-th percentile with linear interpolation between order statistics of
/// already sorted values.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub(crate) fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn select_threshold(
    validation_scores: &[f64],
    percentile: u32,
) -> Result<ThresholdRule, EvalError> {
    if validation_scores.is_empty() {
        return Err(EvalError::Usage("no validation scores to threshold".into()));
    }
    if percentile > 100 {
        return Err(EvalError::Usage(format!(
            "percentile {percentile} exceeds 100"
        )));
    }
    if validation_scores.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Data("validation scores must be finite".into()));
    }
    let sorted = sorted_copy(validation_scores);
    Ok(ThresholdRule {
        percentile,
        threshold: percentile_sorted(&sorted, percentile as f64),
    })
}
