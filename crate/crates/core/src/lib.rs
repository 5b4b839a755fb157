//! Semi-supervised anomaly detection for multivariate production time series.
//!
//! The crate provides variational autoencoders scored by reconstruction error
//! or reconstruction probability, extensions that learn from sparse anomaly
//! labels and sparse production metadata, supervised and classic baselines,
//! and the threshold-sweep evaluation used to compare them.
//!
//! Modules, bottom-up:
//!
//! - [`nn`]: tensors, a reverse-mode gradient tape, dense/LSTM layers, Adam.
//! - [`models`]: VAE variants, the supervised classifier, losses, training.
//! - [`baselines`]: PCA reconstruction and Isolation Forest.
//! - [`data`]: ingestion, preprocessing, splitting, windowing, synthetic data.
//! - [`eval`]: scoring, thresholds, metric sweeps, combination rules, tests.
//! - [`runner`]: config-driven experiments and report files.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod runner;

pub use error::{Error, Result};
