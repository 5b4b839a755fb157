use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const MAX_TD_DENSE_LAYERS: usize = 3;
pub const MAX_LSTM_LAYERS: usize = 3;

/// Layer widths and training sizes of an encoder/decoder pair.
///
/// The encoder runs `F → 2F → td_dense_layers… → lstm_layers… → z`; the
/// decoder mirrors it back to `2F` before the output heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeArchitecture {
    pub input_width: usize,
    pub td_dense_layers: Vec<usize>,
    pub lstm_layers: Vec<usize>,
    pub bottleneck_width: usize,
    pub window_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
}

impl VaeArchitecture {
    /// A small default: one LSTM layer of width `F` and a bottleneck of
    /// `max(F / 2, 1)`.
    pub fn for_input(input_width: usize, window_size: usize) -> Self {
        Self {
            input_width,
            td_dense_layers: Vec::new(),
            lstm_layers: vec![input_width.max(1)],
            bottleneck_width: (input_width / 2).max(1),
            window_size,
            batch_size: 32,
            epochs: 40,
        }
    }

    /// `2F`, then the dense and LSTM widths in encoder order.
    pub fn hidden_widths(&self) -> Vec<usize> {
        std::iter::once(2 * self.input_width)
            .chain(self.td_dense_layers.iter().copied())
            .chain(self.lstm_layers.iter().copied())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut errs = Vec::new();
        if self.input_width == 0 {
            errs.push("input_width must be positive".to_string());
        }
        if self.td_dense_layers.len() > MAX_TD_DENSE_LAYERS {
            errs.push(format!(
                "at most {MAX_TD_DENSE_LAYERS} time-distributed dense layers, got {}",
                self.td_dense_layers.len()
            ));
        }
        if self.lstm_layers.len() > MAX_LSTM_LAYERS {
            errs.push(format!(
                "at most {MAX_LSTM_LAYERS} LSTM layers, got {}",
                self.lstm_layers.len()
            ));
        }
        if self.bottleneck_width == 0 {
            errs.push("bottleneck_width must be positive".into());
        }
        if self
            .td_dense_layers
            .iter()
            .chain(&self.lstm_layers)
            .any(|&w| w == 0)
        {
            errs.push("layer widths must be positive".into());
        }
        let widths = self.hidden_widths();
        if let Some(w) = widths.windows(2).find(|w| w[1] > w[0]) {
            errs.push(format!(
                "widths must not grow toward the bottleneck: {} follows {} in {widths:?}",
                w[1], w[0]
            ));
        }
        if let Some(&last) = widths.last() {
            if self.bottleneck_width > last {
                errs.push(format!(
                    "bottleneck_width {} exceeds the narrowest hidden layer {last}",
                    self.bottleneck_width
                ));
            }
        }
        if self.window_size == 0 {
            errs.push("window_size must be positive".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Architecture(errs.join("; ")))
        }
    }
}
