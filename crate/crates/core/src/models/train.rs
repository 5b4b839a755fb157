//! Mini-batch training shared by every neural model.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vae::LossBreakdown;
use crate::data::WindowBatch;
use crate::error::ModelError;
use crate::nn::rng::{stream_rng, streams};
use crate::nn::{adam_step, lr_schedule, AdamConfig, AdamState, Graph, ParamStore, Var};

/// A model that can produce a differentiable loss for a batch of windows.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Builds the loss of `batch`; `rng` supplies any sampling noise.
    fn batch_loss(
        &self,
        g: &mut Graph,
        batch: &WindowBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, LossBreakdown), ModelError>;

    /// Called once before the first epoch.
    fn prepare(&mut self, _train: &WindowBatch) -> Result<(), ModelError> {
        Ok(())
    }

    /// Whether validation windows must all be anomaly-free.
    fn needs_clean_validation(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

/// Per-epoch mean losses and the learning rate each epoch ran with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

/// Trains `model` in place. Windows are reshuffled every epoch from the
/// shuffle stream of `cfg.seed`; validation noise is redrawn identically each
/// epoch so validation losses are comparable. The final parameters are those
/// of the last epoch.
pub fn train<M: Trainable>(
    model: &mut M,
    train: &WindowBatch,
    validation: &WindowBatch,
    cfg: &TrainConfig,
) -> Result<TrainingHistory, ModelError> {
    let mut history = TrainingHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::Architecture(
            "batch_size must be positive".into(),
        ));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(ModelError::Data(format!(
            "need training and validation windows, got {} and {}",
            train.len(),
            validation.len()
        )));
    }
    if model.needs_clean_validation() && validation.labels.contains(&Some(true)) {
        return Err(ModelError::Data(
            "validation windows must be anomaly-free".into(),
        ));
    }
    model.prepare(train)?;
    let mut adam = AdamState::new(model.params(), cfg.adam);
    let mut shuffle = stream_rng(cfg.seed, streams::SHUFFLE);
    let mut noise = stream_rng(cfg.seed, streams::LATENT_NOISE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let val_batches: Vec<WindowBatch> = (0..validation.len())
        .collect::<Vec<_>>()
        .chunks(cfg.batch_size)
        .map(|c| validation.select(c))
        .collect();

    for epoch in 0..cfg.epochs {
        history.learning_rate.push(adam.learning_rate);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train.select(idx);
            let mut g = Graph::new();
            let (loss, parts) = model.batch_loss(&mut g, &batch, &mut noise)?;
            if let Some(term) = parts.first_non_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    batch: bi,
                    term,
                });
            }
            let grads = g.backward(loss)?;
            adam_step(model.params_mut(), &grads, &mut adam)?;
            total += parts.total * idx.len() as f64;
        }
        history.train_loss.push(total / train.len() as f64);

        let mut val_rng = stream_rng(cfg.seed, streams::VALIDATION_NOISE);
        let mut vtotal = 0.0;
        for (bi, vb) in val_batches.iter().enumerate() {
            let mut g = Graph::new();
            let (_, parts) = model.batch_loss(&mut g, vb, &mut val_rng)?;
            if let Some(term) = parts.first_non_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    batch: bi,
                    term,
                });
            }
            vtotal += parts.total * vb.len() as f64;
        }
        history
            .validation_loss
            .push(vtotal / validation.len() as f64);
        lr_schedule(&mut adam, &history.validation_loss);
    }
    Ok(history)
}
