//! Config-driven experiments: build datasets, train every model over repeated
//! seeds, select best repeats, run significance tests and write reports.

mod config;
mod experiment;
mod report;

pub use config::{
    validate_config, ArchitectureOverrides, DatasetConfig, ExperimentConfig, ModelConfig,
    ModelName, EXPERIMENT_SCHEMA_VERSION,
};
pub use experiment::{
    load_dataset, repeat_seed, run_experiment, select_best, CrossDatasetStats, DatasetResult,
    MethodResult, PairTest, RepeatResult, ResultTable, RunReport, REPORT_SCHEMA_VERSION,
};
pub use report::{
    emit_report, load_report, read_table_csv, render_report, render_table, slug, write_table_csv,
    AUC_TABLE_FILE, F1_TABLE_FILE, MANIFEST_FILE, SUMMARY_FILE,
};
