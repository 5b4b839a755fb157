use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::NnError;

/// Activations indexed `[batch, time, feature]`, stored row-major.
///
/// The flat layout matches a `(B·T) × F` matrix whose row `b·T + t` holds
/// the features of window `b` at step `t`; time-distributed layers work on
/// that view directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    batch: usize,
    time: usize,
    features: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, time: usize, features: usize) -> Self {
        Self {
            batch,
            time,
            features,
            data: vec![0.0; batch * time * features],
        }
    }

    pub fn from_vec(
        batch: usize,
        time: usize,
        features: usize,
        data: Vec<f64>,
    ) -> Result<Self, NnError> {
        if batch * time * features != data.len() {
            return Err(NnError::Shape(format!(
                "tensor ({batch}, {time}, {features}) needs {} values, got {}",
                batch * time * features,
                data.len()
            )));
        }
        Ok(Self {
            batch,
            time,
            features,
            data,
        })
    }

    /// Reinterprets a `(B·T) × F` matrix as a tensor.
    pub fn from_matrix(m: Matrix, batch: usize, time: usize) -> Result<Self, NnError> {
        let features = m.cols();
        if m.rows() != batch * time {
            return Err(NnError::Shape(format!(
                "matrix with {} rows cannot hold batch {batch} x time {time}",
                m.rows()
            )));
        }
        Self::from_vec(batch, time, features, m.into_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.time, self.features)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize, f: usize) -> f64 {
        self.data[(b * self.time + t) * self.features + f]
    }

    #[inline]
    pub fn set(&mut self, b: usize, t: usize, f: usize, v: f64) {
        self.data[(b * self.time + t) * self.features + f] = v;
    }

    /// Feature vector at `(b, t)`.
    pub fn step(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.time + t) * self.features;
        &self.data[start..start + self.features]
    }

    /// The `(B·T) × F` view, copied.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.batch * self.time, self.features, self.data.clone())
            .expect("shape product equals element count")
    }

    /// Windows `idx` as a new tensor.
    pub fn select_batch(&self, idx: &[usize]) -> Self {
        let stride = self.time * self.features;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &b in idx {
            data.extend_from_slice(&self.data[b * stride..(b + 1) * stride]);
        }
        Self {
            batch: idx.len(),
            time: self.time,
            features: self.features,
            data,
        }
    }

    /// Keeps only the given feature columns.
    pub fn select_features(&self, idx: &[usize]) -> Self {
        let m = self.to_matrix().select_cols(idx);
        Self::from_matrix(m, self.batch, self.time).expect("row count unchanged")
    }
}
