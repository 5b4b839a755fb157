use thiserror::Error;

/// Errors raised by the neural-network engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dimension mismatch in layer `{layer}`: {detail}")]
    Dimension { layer: String, detail: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Errors raised while building, training or evaluating a model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: first non-finite term is `{term}`")]
    NonFinite {
        epoch: usize,
        batch: usize,
        term: &'static str,
    },
}

/// Errors from ingestion and the preprocessing pipeline.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("ingestion error at row {row}, column `{column}`: {detail}")]
    Ingest {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("data error: {0}")]
    Invalid(String),
    #[error("pipeline usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors from scoring, thresholds and statistical tests.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
}

/// Errors from the classic baselines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

/// Top-level error for the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("output error: {0}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
