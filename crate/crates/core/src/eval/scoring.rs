use serde::{Deserialize, Serialize};

use super::threshold::ThresholdRule;
use crate::data::WindowBatch;
use crate::error::{EvalError, ModelError};
use crate::models::Vae;

/// Per-window scores (higher is more anomalous), ground truth and, once a
/// threshold is applied, decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub ground_truth: Vec<u8>,
    pub decisions: Option<Vec<bool>>,
    pub threshold: Option<ThresholdRule>,
}

impl ScoreSeries {
    pub fn new(scores: Vec<f64>, ground_truth: Vec<u8>) -> Result<Self, EvalError> {
        if scores.len() != ground_truth.len() {
            return Err(EvalError::Usage(format!(
                "{} scores but {} labels",
                scores.len(),
                ground_truth.len()
            )));
        }
        Ok(Self {
            scores,
            ground_truth,
            decisions: None,
            threshold: None,
        })
    }

    pub fn decide(&mut self, rule: ThresholdRule) {
        self.decisions = Some(self.scores.iter().map(|&s| rule.decide(s)).collect());
        self.threshold = Some(rule);
    }
}

/// Undecided deviation scores of `windows` under a trained VAE.
pub fn deviation_score(
    model: &Vae,
    windows: &WindowBatch,
    samples: usize,
    seed: u64,
) -> Result<ScoreSeries, ModelError> {
    let s = model.score(&windows.x, samples, seed)?;
    ScoreSeries::new(s.deviation, windows.truth()).map_err(|e| ModelError::Data(e.to_string()))
}
