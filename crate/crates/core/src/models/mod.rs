//! Neural detectors: the VAE variants, the supervised classifier, their
//! losses and the shared training loop.

mod arch;
mod dnn;
mod encoder;
pub mod losses;
mod train;
mod vae;

pub use arch::{VaeArchitecture, MAX_LSTM_LAYERS, MAX_TD_DENSE_LAYERS};
pub use dnn::{Dnn, DnnCheckpoint};
pub use losses::LossWeights;
pub use train::{train, TrainConfig, Trainable, TrainingHistory};
pub use vae::{
    label_from_one_hot, metadata_from_one_hot, reparameterize, vae_err_loss, vae_md_loss,
    vae_prob_loss, vae_sl_loss, ColumnSplit, LatentSample, LossBreakdown, ReconstructionHeads, Vae,
    VaeCheckpoint, VaeKind, VaeOutput, WindowScores, ANOMALOUS, DEFAULT_SCORING_SAMPLES,
    MODEL_SCHEMA_VERSION,
};
