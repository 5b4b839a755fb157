//! Scoring, thresholds, metric sweeps, combination rules and significance
//! tests.

mod combine;
mod metrics;
mod scoring;
mod stats;
mod threshold;

pub use combine::{
    barycentric_measure, combine_avg, combine_max, rescale_deviation, sweep_combined, Barycentric,
    Combination, CombineInputs, CombinedScore,
};
pub use metrics::{
    average_ranks, confusion, confusion_metrics, rank_auc, single_point_report, sweep_percentiles,
    sweep_with, trapezoid_auc, truncate2, Confusion, Metrics, MetricsReport, OperatingPoint,
    LABEL_FREE_PERCENTILE,
};
pub use scoring::{deviation_score, ScoreSeries};
pub use stats::{friedman_test, student_ttest, two_sample_ttest, TestResult};
pub use threshold::{percentile_sorted, select_threshold, ThresholdRule};
