//! Supervised window classifier built from the autoencoder's encoder.
//!
//! The encoder output is averaged over time and fed to a single sigmoid unit
//! trained with binary cross-entropy against window labels.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::VaeArchitecture;
use super::encoder::Encoder;
use super::losses::bernoulli_nll_elements;
use super::train::Trainable;
use super::vae::{LossBreakdown, MODEL_SCHEMA_VERSION};
use crate::data::WindowBatch;
use crate::error::{ModelError, NnError};
use crate::nn::rng::{stream_rng, streams};
use crate::nn::{Activation, Checkpoint, Dense, Graph, Matrix, ParamStore, Tensor3, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnCheckpoint {
    pub schema_version: u32,
    pub architecture: VaeArchitecture,
    pub params: Checkpoint,
}

#[derive(Debug, Clone)]
pub struct Dnn {
    arch: VaeArchitecture,
    store: ParamStore,
    encoder: Encoder,
    output: Dense,
}

impl Dnn {
    pub fn new(arch: VaeArchitecture, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut rng = stream_rng(seed, streams::INIT);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, "encoder", &arch, &mut rng);
        let output = Dense::new(
            &mut store,
            "output",
            encoder.output_width,
            1,
            Activation::Sigmoid,
            &mut rng,
        );
        Ok(Self {
            arch,
            store,
            encoder,
            output,
        })
    }

    pub fn architecture(&self) -> &VaeArchitecture {
        &self.arch
    }

    /// Parameter ids of the final sigmoid layer (weights, bias).
    pub fn output_params(&self) -> (crate::nn::ParamId, crate::nn::ParamId) {
        (self.output.weights, self.output.bias)
    }

    fn forward_graph(&self, g: &mut Graph, x: &Tensor3) -> Result<Var, ModelError> {
        let (b, t, f) = x.shape();
        if f != self.arch.input_width {
            return Err(NnError::Dimension {
                layer: "dnn.input".into(),
                detail: format!("expected {} features, got {f}", self.arch.input_width),
            }
            .into());
        }
        let xv = g.constant(x.to_matrix());
        let h = self.encoder.forward(g, &self.store, xv, b, t)?;
        let mut pool = Matrix::zeros(b, b * t);
        for w in 0..b {
            for s in 0..t {
                pool.set(w, w * t + s, 1.0 / t as f64);
            }
        }
        let pool = g.constant(pool);
        let pooled = g.matmul(pool, h)?;
        Ok(self.output.forward(g, &self.store, pooled)?)
    }

    /// Anomaly probability per window.
    pub fn predict(&self, x: &Tensor3) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(x.batch());
        let idx: Vec<usize> = (0..x.batch()).collect();
        for chunk in idx.chunks(256) {
            let mut g = Graph::new();
            let p = self.forward_graph(&mut g, &x.select_batch(chunk))?;
            out.extend_from_slice(g.value(p).data());
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> DnnCheckpoint {
        DnnCheckpoint {
            schema_version: MODEL_SCHEMA_VERSION,
            architecture: self.arch.clone(),
            params: Checkpoint::from_store(&self.store),
        }
    }

    pub fn from_checkpoint(ckpt: &DnnCheckpoint) -> Result<Self, ModelError> {
        let mut m = Self::new(ckpt.architecture.clone(), 0)?;
        ckpt.params.restore_into(&mut m.store)?;
        Ok(m)
    }
}

impl Trainable for Dnn {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn prepare(&mut self, train: &WindowBatch) -> Result<(), ModelError> {
        if train.labels.iter().any(Option::is_none) {
            return Err(ModelError::Data(
                "the classifier needs a label for every training window".into(),
            ));
        }
        Ok(())
    }

    fn needs_clean_validation(&self) -> bool {
        false
    }

    fn batch_loss(
        &self,
        g: &mut Graph,
        batch: &WindowBatch,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Var, LossBreakdown), ModelError> {
        let p = self.forward_graph(g, &batch.x)?;
        let y: Vec<f64> = batch
            .labels
            .iter()
            .map(|l| if *l == Some(true) { 1.0 } else { 0.0 })
            .collect();
        let y = g.constant(Matrix::from_vec(y.len(), 1, y)?);
        let e = bernoulli_nll_elements(g, y, p)?;
        let loss = g.mean(e);
        let v = g.scalar(loss);
        Ok((
            loss,
            LossBreakdown {
                total: v,
                label: v,
                ..LossBreakdown::default()
            },
        ))
    }
}
