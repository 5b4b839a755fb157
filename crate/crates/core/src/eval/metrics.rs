//! Confusion counts, percentile sweeps and AUC.

use serde::{Deserialize, Serialize};

use super::threshold::{percentile_sorted, sorted_copy};
use crate::error::EvalError;

/// Percentile used for the operating point chosen without test labels.
pub const LABEL_FREE_PERCENTILE: u32 = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> Metrics {
        confusion_metrics(self.tp, self.fp, self.tn, self.fn_)
    }

    /// `(false positive rate, true positive rate)`, zero where undefined.
    pub fn roc_point(&self) -> (f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        (
            ratio(self.fp, self.fp + self.tn),
            ratio(self.tp, self.tp + self.fn_),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Standard definitions; any ratio with a zero denominator is 0.
pub fn confusion_metrics(tp: usize, fp: usize, tn: usize, fn_: usize) -> Metrics {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    Metrics {
        accuracy: ratio(tp + tn, tp + fp + tn + fn_),
        precision,
        recall,
        f1,
    }
}

pub fn confusion(decisions: &[bool], truth: &[u8]) -> Confusion {
    let mut c = Confusion::default();
    for (&d, &t) in decisions.iter().zip(truth) {
        match (d, t == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Cuts a score to two decimals, as used for best-result selection.
pub fn truncate2(v: f64) -> f64 {
    // the nudge keeps values like 0.57 (stored as 0.5699…) at 0.57
    ((v * 100.0) + 1e-9).floor() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Validation percentile; `None` for methods with a fixed decision rule.
    pub percentile: Option<u32>,
    pub threshold: Option<f64>,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub fpr: f64,
    pub tpr: f64,
}

impl OperatingPoint {
    pub fn new(percentile: Option<u32>, threshold: Option<f64>, confusion: Confusion) -> Self {
        let (fpr, tpr) = confusion.roc_point();
        Self {
            percentile,
            threshold,
            confusion,
            metrics: confusion.metrics(),
            fpr,
            tpr,
        }
    }
}

/// Operating points of one method on one test set.
///
/// `selected` is chosen with test labels (highest two-decimal f1, lowest
/// percentile among ties) and is what result tables report. `label_free` is
/// the operating point a deployment without test labels would use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub points: Vec<OperatingPoint>,
    /// `None` when the ground truth holds a single class.
    pub auc: Option<f64>,
    pub degenerate: bool,
    pub selected: usize,
    pub label_free: Option<usize>,
}

impl MetricsReport {
    pub fn best(&self) -> &OperatingPoint {
        &self.points[self.selected]
    }

    pub fn best_f1(&self) -> f64 {
        self.best().metrics.f1
    }

    pub fn auc_or_zero(&self) -> f64 {
        self.auc.unwrap_or(0.0)
    }

    /// Builds a report from already computed operating points. `auc` overrides
    /// the trapezoid area over the points.
    pub fn from_points(
        points: Vec<OperatingPoint>,
        truth: &[u8],
        auc: Option<f64>,
    ) -> Result<Self, EvalError> {
        if points.is_empty() {
            return Err(EvalError::Usage("no operating points".into()));
        }
        let positives = truth.iter().filter(|&&t| t == 1).count();
        let degenerate = positives == 0 || positives == truth.len();
        let auc = if degenerate {
            None
        } else {
            Some(auc.unwrap_or_else(|| trapezoid_auc(&points)))
        };
        let mut selected = 0;
        for (i, p) in points.iter().enumerate() {
            if truncate2(p.metrics.f1) > truncate2(points[selected].metrics.f1) {
                selected = i;
            }
        }
        let label_free = points
            .iter()
            .position(|p| p.percentile == Some(LABEL_FREE_PERCENTILE))
            .or((points.len() == 1).then_some(0));
        Ok(Self {
            points,
            auc,
            degenerate,
            selected,
            label_free,
        })
    }
}

/// Area under the ROC polyline through the points plus (0,0) and (1,1).
pub fn trapezoid_auc(points: &[OperatingPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Rank-based AUC (Mann-Whitney U with average ranks for ties).
pub fn rank_auc(scores: &[f64], truth: &[u8]) -> Option<f64> {
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_aligned(scores: &[f64], truth: &[u8]) -> Result<(), EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::Usage(format!(
            "{} scores but {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.is_empty() {
        return Err(EvalError::Usage("no test windows".into()));
    }
    if let Some(v) = truth.iter().find(|&&t| t > 1) {
        return Err(EvalError::Data(format!("ground truth {v} is not 0 or 1")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::Data("scores must be finite".into()));
    }
    Ok(())
}

/// Evaluates `decide(p, threshold_p)` at every integer percentile `p` of the
/// validation scores.
pub fn sweep_with<F>(
    truth: &[u8],
    validation_scores: &[f64],
    mut decide: F,
) -> Result<MetricsReport, EvalError>
where
    F: FnMut(f64) -> Vec<bool>,
{
    if validation_scores.is_empty() {
        return Err(EvalError::Usage("no validation scores to threshold".into()));
    }
    let sorted = sorted_copy(validation_scores);
    let points = (0..=100u32)
        .map(|p| {
            let thr = percentile_sorted(&sorted, p as f64);
            let d = decide(thr);
            OperatingPoint::new(Some(p), Some(thr), confusion(&d, truth))
        })
        .collect();
    MetricsReport::from_points(points, truth, None)
}

/// Confusion counts and metrics at every percentile 0..=100 of the validation
/// scores, with `score > threshold` flagged anomalous.
pub fn sweep_percentiles(
    test_scores: &[f64],
    truth: &[u8],
    validation_scores: &[f64],
) -> Result<MetricsReport, EvalError> {
    check_aligned(test_scores, truth)?;
    sweep_with(truth, validation_scores, |thr| {
        test_scores.iter().map(|&s| s > thr).collect()
    })
}

/// A single fixed decision rule with an optional continuous score for AUC.
pub fn single_point_report(
    decisions: &[bool],
    scores: Option<&[f64]>,
    truth: &[u8],
) -> Result<MetricsReport, EvalError> {
    if decisions.len() != truth.len() {
        return Err(EvalError::Usage(
            "decisions and labels differ in length".into(),
        ));
    }
    let point = OperatingPoint::new(None, None, confusion(decisions, truth));
    let auc = match scores {
        Some(s) => {
            check_aligned(s, truth)?;
            rank_auc(s, truth)
        }
        None => None,
    };
    MetricsReport::from_points(vec![point], truth, auc)
}
