//! Combining deviation decisions with label-head and metadata predictions.

use serde::{Deserialize, Serialize};

use super::metrics::{sweep_with, MetricsReport};
use crate::error::EvalError;

/// Logical OR of two 0/1 decisions.
pub fn combine_max(deviation_decision: u8, label_decision: u8) -> u8 {
    deviation_decision.max(label_decision).min(1)
}

/// Maps `[dev_min, threshold]` onto `[0, 0.5]` and `(threshold, dev_max]` onto
/// `(0.5, 1]`, clamping outside values. Equal bounds give 0.5.
pub fn rescale_deviation(dev: f64, threshold: f64, dev_min: f64, dev_max: f64) -> f64 {
    if dev_max <= dev_min {
        return 0.5;
    }
    let r = if dev <= threshold {
        if threshold > dev_min {
            0.5 * (dev - dev_min) / (threshold - dev_min)
        } else if dev < threshold {
            0.0
        } else {
            0.5
        }
    } else if dev_max > threshold {
        0.5 + 0.5 * (dev - threshold) / (dev_max - threshold)
    } else {
        1.0
    };
    r.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedScore {
    pub rescaled_deviation: f64,
    pub pi_anomalous: f64,
    pub metadata_measure: Option<f64>,
    pub combined: f64,
    pub anomalous: bool,
}

/// Mean of the present components; anomalous when strictly above 0.5.
pub fn combine_avg(rescaled_dev: f64, pi_anomalous: f64, extra: Option<f64>) -> CombinedScore {
    let (sum, n) = match extra {
        Some(e) => (rescaled_dev + pi_anomalous + e, 3.0),
        None => (rescaled_dev + pi_anomalous, 2.0),
    };
    let combined = sum / n;
    CombinedScore {
        rescaled_deviation: rescaled_dev,
        pi_anomalous,
        metadata_measure: extra,
        combined,
        anomalous: combined > 0.5,
    }
}

/// Uncertainty of a categorical prediction as its position in the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barycentric {
    /// `‖p − centroid‖ / ‖corner − centroid‖`: 0 at the centroid, 1 at a corner.
    pub certainty: f64,
    /// `1 − certainty`: 1 at the centroid, 0 at a corner.
    pub measure: f64,
}

pub fn barycentric_measure(probs: &[f64]) -> Result<Barycentric, EvalError> {
    let k = probs.len();
    let sum: f64 = probs.iter().sum();
    if k < 2 || probs.iter().any(|p| !p.is_finite() || *p < -1e-9) || (sum - 1.0).abs() > 1e-6 {
        return Err(EvalError::Data(format!(
            "{probs:?} is not a probability vector"
        )));
    }
    let c = 1.0 / k as f64;
    let dist = probs.iter().map(|p| (p - c) * (p - c)).sum::<f64>().sqrt();
    let corner = ((k - 1) as f64 / k as f64).sqrt();
    let certainty = (dist / corner).clamp(0.0, 1.0);
    Ok(Barycentric {
        certainty,
        measure: 1.0 - certainty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    Max,
    Avg,
}

/// Test-set evidence for a combined decision.
#[derive(Debug, Clone, Copy)]
pub struct CombineInputs<'a> {
    pub deviation: &'a [f64],
    pub pi_anomalous: &'a [f64],
    pub metadata_measure: Option<&'a [f64]>,
}

/// Percentile sweep of a combined rule. At each validation percentile the
/// deviation threshold moves; `Max` ORs the deviation decision with
/// `π[anomalous] > 0.5`, `Avg` rescales the deviation and averages it with
/// `π[anomalous]` (and the metadata measure, when given). Rescaling bounds
/// are the validation extremes widened by the test extremes.
pub fn sweep_combined(
    test: CombineInputs<'_>,
    truth: &[u8],
    validation_deviation: &[f64],
    rule: Combination,
) -> Result<MetricsReport, EvalError> {
    let n = truth.len();
    if test.deviation.len() != n
        || test.pi_anomalous.len() != n
        || test.metadata_measure.is_some_and(|m| m.len() != n)
    {
        return Err(EvalError::Usage("combined inputs differ in length".into()));
    }
    if n == 0 {
        return Err(EvalError::Usage("no test windows".into()));
    }
    let extremes = validation_deviation
        .iter()
        .chain(test.deviation)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    sweep_with(truth, validation_deviation, |thr| {
        (0..n)
            .map(|i| match rule {
                Combination::Max => {
                    combine_max(
                        u8::from(test.deviation[i] > thr),
                        u8::from(test.pi_anomalous[i] > 0.5),
                    ) == 1
                }
                Combination::Avg => {
                    let r = rescale_deviation(test.deviation[i], thr, extremes.0, extremes.1);
                    combine_avg(r, test.pi_anomalous[i], test.metadata_measure.map(|m| m[i]))
                        .anomalous
                }
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_truth_table() {
        for a in 0..=1u8 {
            for b in 0..=1u8 {
                assert_eq!(combine_max(a, b), a.max(b));
            }
        }
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_deviation(2.0, 2.0, 0.0, 6.0), 0.5);
        assert_eq!(rescale_deviation(6.0, 2.0, 0.0, 6.0), 1.0);
        assert_eq!(rescale_deviation(0.0, 2.0, 0.0, 6.0), 0.0);
        assert_eq!(rescale_deviation(4.0, 2.0, 0.0, 6.0), 0.75);
        assert_eq!(rescale_deviation(4.0, 2.0, 3.0, 3.0), 0.5);
        assert_eq!(rescale_deviation(-1.0, 2.0, 0.0, 6.0), 0.0);
        assert_eq!(rescale_deviation(9.0, 2.0, 0.0, 6.0), 1.0);
    }

    #[test]
    fn avg_examples() {
        let c = combine_avg(0.9, 0.9, None);
        assert!((c.combined - 0.9).abs() < 1e-15 && c.anomalous);
        let c = combine_avg(0.4, 0.6, None);
        assert_eq!(c.combined, 0.5);
        assert!(!c.anomalous);
        let c = combine_avg(0.9, 0.0, Some(0.9));
        assert!((c.combined - 0.6).abs() < 1e-15 && c.anomalous);
    }

    #[test]
    fn barycentric_examples() {
        let third = 1.0 / 3.0;
        assert!((barycentric_measure(&[third, third, third]).unwrap().measure - 1.0).abs() < 1e-12);
        assert_eq!(barycentric_measure(&[1.0, 0.0, 0.0]).unwrap().measure, 0.0);
        assert!(barycentric_measure(&[0.5, 0.6, 0.0]).is_err());
    }
}
