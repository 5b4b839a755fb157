//! Minimal neural-network engine: tensors, a gradient tape, dense and LSTM
//! layers, Glorot initialization and Adam.

mod checkpoint;
mod graph;
mod layers;
mod matrix;
mod optim;
pub mod rng;
mod tensor;

pub use checkpoint::{Checkpoint, ParamEntry, CHECKPOINT_SCHEMA_VERSION};
pub use graph::{sigmoid, Gradients, Graph, ParamId, ParamStore, Var};
pub use layers::{
    dense_forward, glorot_normal, glorot_normal_init, lstm_forward, Activation, Dense, DenseParams,
    Lstm, LstmParams, LstmState,
};
pub use matrix::Matrix;
pub use optim::{
    adam_step, lr_schedule, AdamConfig, AdamState, DEFAULT_L2, DEFAULT_LEARNING_RATE,
    DEFAULT_PATIENCE, LEARNING_RATE_FLOOR,
};
pub use tensor::Tensor3;
