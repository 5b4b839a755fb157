use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::VaeArchitecture;
use crate::error::NnError;
use crate::nn::{Activation, Dense, Graph, Lstm, ParamStore, Var};

/// The shared encoder stack: dense `2F`, optional time-distributed dense
/// layers, then LSTM layers. All dense layers use ReLU.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Encoder {
    pub dense: Vec<Dense>,
    pub lstm: Vec<Lstm>,
    pub output_width: usize,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        arch: &VaeArchitecture,
        rng: &mut R,
    ) -> Self {
        let mut width = arch.input_width;
        let mut dense = Vec::new();
        let dense_widths =
            std::iter::once(2 * arch.input_width).chain(arch.td_dense_layers.iter().copied());
        for (i, w) in dense_widths.enumerate() {
            dense.push(Dense::new(
                store,
                &format!("{prefix}.dense{i}"),
                width,
                w,
                Activation::Relu,
                rng,
            ));
            width = w;
        }
        let mut lstm = Vec::new();
        for (i, &w) in arch.lstm_layers.iter().enumerate() {
            lstm.push(Lstm::new(
                store,
                &format!("{prefix}.lstm{i}"),
                width,
                w,
                rng,
            ));
            width = w;
        }
        Self {
            dense,
            lstm,
            output_width: width,
        }
    }

    /// `x` is `(B·T) × F`; returns the `(B·T) × output_width` hidden sequence.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        batch: usize,
        time: usize,
    ) -> Result<Var, NnError> {
        let mut h = x;
        for d in &self.dense {
            h = d.forward(g, store, h)?;
        }
        for l in &self.lstm {
            h = l.forward(g, store, h, batch, time)?;
        }
        Ok(h)
    }
}

/// The mirrored decoder stack ending in a dense `2F` layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Decoder {
    pub lstm: Vec<Lstm>,
    pub dense: Vec<Dense>,
    pub output_width: usize,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        arch: &VaeArchitecture,
        input_width: usize,
        rng: &mut R,
    ) -> Self {
        let mut width = input_width;
        let mut lstm = Vec::new();
        for (i, &w) in arch.lstm_layers.iter().rev().enumerate() {
            lstm.push(Lstm::new(
                store,
                &format!("{prefix}.lstm{i}"),
                width,
                w,
                rng,
            ));
            width = w;
        }
        let mut dense = Vec::new();
        let dense_widths = arch
            .td_dense_layers
            .iter()
            .rev()
            .copied()
            .chain(std::iter::once(2 * arch.input_width));
        for (i, w) in dense_widths.enumerate() {
            dense.push(Dense::new(
                store,
                &format!("{prefix}.dense{i}"),
                width,
                w,
                Activation::Relu,
                rng,
            ));
            width = w;
        }
        Self {
            lstm,
            dense,
            output_width: width,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        c: Var,
        batch: usize,
        time: usize,
    ) -> Result<Var, NnError> {
        let mut h = c;
        for l in &self.lstm {
            h = l.forward(g, store, h, batch, time)?;
        }
        for d in &self.dense {
            h = d.forward(g, store, h)?;
        }
        Ok(h)
    }
}
