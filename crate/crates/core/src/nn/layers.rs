//! Dense and LSTM layers, Glorot initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamId, ParamStore, Var};
use super::rng::{normal_vec, stream_rng, streams};
use super::{Matrix, Tensor3};
use crate::error::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Softmax => g.softmax(x),
            Activation::Tanh => g.tanh(x),
            Activation::Linear => x,
        }
    }
}

/// Weights `[fan_in × fan_out]`, a zero-initialized bias and an activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// `fan_in × fan_out` draws from N(0, 2 / (fan_in + fan_out)).
pub fn glorot_normal<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let data = normal_vec(rng, fan_in * fan_out)
        .into_iter()
        .map(|z| z * std)
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

/// Glorot-normal weights and zero bias, deterministic in `seed`.
pub fn glorot_normal_init(fan_in: usize, fan_out: usize, rng_seed: u64) -> DenseParams {
    let mut rng = stream_rng(rng_seed, streams::INIT);
    DenseParams {
        weights: glorot_normal(fan_in, fan_out, &mut rng),
        bias: vec![0.0; fan_out],
        activation: Activation::Linear,
    }
}

/// Applies a dense layer independently at every `(batch, time)` step.
pub fn dense_forward(x: &Tensor3, p: &DenseParams) -> Result<Tensor3, NnError> {
    let (b, t, f) = x.shape();
    if f != p.weights.rows() || p.bias.len() != p.weights.cols() {
        return Err(NnError::Dimension {
            layer: "dense".into(),
            detail: format!(
                "input has {f} features, weights are {}x{}, bias has {}",
                p.weights.rows(),
                p.weights.cols(),
                p.bias.len()
            ),
        });
    }
    let mut g = Graph::new();
    let xv = g.constant(x.to_matrix());
    let w = g.constant(p.weights.clone());
    let bias = g.constant(Matrix::from_vec(1, p.bias.len(), p.bias.clone())?);
    let y = g.matmul(xv, w)?;
    let y = g.add_bias(y, bias)?;
    let y = p.activation.apply(&mut g, y);
    Tensor3::from_matrix(g.value(y).clone(), b, t)
}

/// A dense layer whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub name: String,
    pub weights: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weights = store.add(
            format!("{name}.weights"),
            glorot_normal(fan_in, fan_out, rng),
        );
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, fan_out));
        Self {
            name: name.to_string(),
            weights,
            bias,
            fan_in,
            fan_out,
            activation,
        }
    }

    /// Forward over a `(rows × fan_in)` node.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let (_, f) = g.shape(x);
        if f != self.fan_in {
            return Err(NnError::Dimension {
                layer: self.name.clone(),
                detail: format!("expected {} input features, got {f}", self.fan_in),
            });
        }
        let w = g.param(store, self.weights);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        let y = g.add_bias(y, b)?;
        Ok(self.activation.apply(g, y))
    }

    pub fn params(&self, store: &ParamStore) -> DenseParams {
        DenseParams {
            weights: store.get(self.weights).clone(),
            bias: store.get(self.bias).data().to_vec(),
            activation: self.activation,
        }
    }
}

/// Gate parameters of an LSTM, columns ordered `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `input_size × 4H`
    pub input_weights: Matrix,
    /// `H × 4H`
    pub recurrent_weights: Matrix,
    /// `4H`
    pub bias: Vec<f64>,
    pub hidden: usize,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            input_weights: Matrix::zeros(input_size, 4 * hidden),
            recurrent_weights: Matrix::zeros(hidden, 4 * hidden),
            bias: vec![0.0; 4 * hidden],
            hidden,
        }
    }

    fn check(&self, features: usize) -> Result<(), NnError> {
        let h4 = 4 * self.hidden;
        let ok = self.hidden > 0
            && self.input_weights.shape() == (features, h4)
            && self.recurrent_weights.shape() == (self.hidden, h4)
            && self.bias.len() == h4;
        if ok {
            Ok(())
        } else {
            Err(NnError::Dimension {
                layer: "lstm".into(),
                detail: format!(
                    "input has {features} features; input weights {:?}, recurrent {:?}, bias {} for hidden {}",
                    self.input_weights.shape(),
                    self.recurrent_weights.shape(),
                    self.bias.len(),
                    self.hidden
                ),
            })
        }
    }
}

/// Hidden and cell state, each `B × H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Matrix,
    pub c: Matrix,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Matrix::zeros(batch, hidden),
            c: Matrix::zeros(batch, hidden),
        }
    }
}

/// Runs the recurrence over the time axis; returns all hidden states and the
/// final state.
pub fn lstm_forward(
    x: &Tensor3,
    p: &LstmParams,
    initial_state: Option<&LstmState>,
) -> Result<(Tensor3, LstmState), NnError> {
    let (b, t, f) = x.shape();
    p.check(f)?;
    let mut g = Graph::new();
    let xv = g.constant(x.to_matrix());
    let wi = g.constant(p.input_weights.clone());
    let wr = g.constant(p.recurrent_weights.clone());
    let bias = g.constant(Matrix::from_vec(1, p.bias.len(), p.bias.clone())?);
    let init = match initial_state {
        Some(s) => {
            if s.h.shape() != (b, p.hidden) || s.c.shape() != (b, p.hidden) {
                return Err(NnError::Dimension {
                    layer: "lstm".into(),
                    detail: "initial state shape does not match batch x hidden".into(),
                });
            }
            Some((g.constant(s.h.clone()), g.constant(s.c.clone())))
        }
        None => None,
    };
    let (out, h, c) = lstm_recurrence(&mut g, xv, wi, wr, bias, p.hidden, b, t, init)?;
    let state = LstmState {
        h: g.value(h).clone(),
        c: g.value(c).clone(),
    };
    Ok((Tensor3::from_matrix(g.value(out).clone(), b, t)?, state))
}

#[allow(clippy::too_many_arguments)]
fn lstm_recurrence(
    g: &mut Graph,
    x: Var,
    wi: Var,
    wr: Var,
    bias: Var,
    hidden: usize,
    batch: usize,
    time: usize,
    init: Option<(Var, Var)>,
) -> Result<(Var, Var, Var), NnError> {
    let (mut h, mut c) = match init {
        Some(s) => s,
        None => (
            g.constant(Matrix::zeros(batch, hidden)),
            g.constant(Matrix::zeros(batch, hidden)),
        ),
    };
    // Input projection for all steps at once.
    let xw = g.matmul(x, wi)?;
    let xw = g.add_bias(xw, bias)?;
    let mut outputs = Vec::with_capacity(time);
    for step in 0..time {
        let rows: Vec<usize> = (0..batch).map(|bi| bi * time + step).collect();
        let xt = g.gather_rows(xw, rows)?;
        let hr = g.matmul(h, wr)?;
        let z = g.add(xt, hr)?;
        let i = g.slice_cols(z, 0, hidden)?;
        let f = g.slice_cols(z, hidden, 2 * hidden)?;
        let cc = g.slice_cols(z, 2 * hidden, 3 * hidden)?;
        let o = g.slice_cols(z, 3 * hidden, 4 * hidden)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cc = g.tanh(cc);
        let o = g.sigmoid(o);
        let fc = g.mul(f, c)?;
        let ig = g.mul(i, cc)?;
        c = g.add(fc, ig)?;
        let tc = g.tanh(c);
        h = g.mul(o, tc)?;
        outputs.push(h);
    }
    let out = g.stack_steps(&outputs)?;
    Ok((out, h, c))
}

/// An LSTM layer whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm {
    pub name: String,
    pub input_weights: ParamId,
    pub recurrent_weights: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let input_weights = store.add(
            format!("{name}.input_weights"),
            glorot_normal(input_size, 4 * hidden, rng),
        );
        let recurrent_weights = store.add(
            format!("{name}.recurrent_weights"),
            glorot_normal(hidden, 4 * hidden, rng),
        );
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, 4 * hidden));
        Self {
            name: name.to_string(),
            input_weights,
            recurrent_weights,
            bias,
            input_size,
            hidden,
        }
    }

    /// Forward over a `(B·T) × input_size` node from a zero state; returns
    /// the `(B·T) × H` hidden sequence.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        batch: usize,
        time: usize,
    ) -> Result<Var, NnError> {
        let (r, f) = g.shape(x);
        if f != self.input_size || r != batch * time {
            return Err(NnError::Dimension {
                layer: self.name.clone(),
                detail: format!(
                    "expected {}x{} input, got {r}x{f}",
                    batch * time,
                    self.input_size
                ),
            });
        }
        let wi = g.param(store, self.input_weights);
        let wr = g.param(store, self.recurrent_weights);
        let b = g.param(store, self.bias);
        let (out, _, _) = lstm_recurrence(g, x, wi, wr, b, self.hidden, batch, time, None)?;
        Ok(out)
    }

    pub fn params(&self, store: &ParamStore) -> LstmParams {
        LstmParams {
            input_weights: store.get(self.input_weights).clone(),
            recurrent_weights: store.get(self.recurrent_weights).clone(),
            bias: store.get(self.bias).data().to_vec(),
            hidden: self.hidden,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::sigmoid;

    fn t3(b: usize, t: usize, f: usize, data: Vec<f64>) -> Tensor3 {
        Tensor3::from_vec(b, t, f, data).unwrap()
    }

    #[test]
    fn glorot_bias_is_zero_and_deterministic() {
        let p = glorot_normal_init(2, 2, 7);
        assert_eq!(p.bias, vec![0.0, 0.0]);
        assert_eq!(p, glorot_normal_init(2, 2, 7));
        assert_ne!(p.weights, glorot_normal_init(2, 2, 8).weights);
    }

    #[test]
    fn glorot_std_matches_formula() {
        // Monte Carlo: pool 10^5+ draws of an 8x8 init across seeds.
        let mut draws = Vec::new();
        let mut seed = 0;
        while draws.len() < 100_000 {
            draws.extend_from_slice(glorot_normal_init(8, 8, seed).weights.data());
            seed += 1;
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let std = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = (2.0f64 / 16.0).sqrt();
        assert!((std - want).abs() / want < 0.02, "std {std} vs {want}");
    }

    #[test]
    fn dense_identity_linear_is_identity() {
        let x = t3(2, 2, 2, vec![1.0, -2.0, 3.0, 0.5, -1.0, 4.0, 0.0, 2.0]);
        let p = DenseParams {
            weights: Matrix::identity(2),
            bias: vec![0.0, 0.0],
            activation: Activation::Linear,
        };
        assert_eq!(dense_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn dense_relu_and_softmax() {
        let mut p = DenseParams {
            weights: Matrix::identity(2),
            bias: vec![0.0, 0.0],
            activation: Activation::Relu,
        };
        let y = dense_forward(&t3(1, 1, 2, vec![-1.0, 2.0]), &p).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
        p.activation = Activation::Softmax;
        let y = dense_forward(&t3(1, 1, 2, vec![1.0, 1.0]), &p).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn dense_shape_mismatch_names_layer() {
        let p = glorot_normal_init(3, 2, 0);
        let err = dense_forward(&Tensor3::zeros(1, 1, 2), &p).unwrap_err();
        assert!(matches!(err, NnError::Dimension { ref layer, .. } if layer == "dense"));
    }

    #[test]
    fn dense_is_time_distributed() {
        let p = glorot_normal_init(3, 4, 1);
        let mut x = Tensor3::from_vec(1, 3, 3, (0..9).map(|v| v as f64 * 0.3).collect()).unwrap();
        let y0 = dense_forward(&x, &p).unwrap();
        x.set(0, 0, 1, 5.0);
        x.set(0, 2, 2, -3.0);
        let y1 = dense_forward(&x, &p).unwrap();
        assert_eq!(y0.step(0, 1), y1.step(0, 1));
        assert_ne!(y0.step(0, 0), y1.step(0, 0));
    }

    #[test]
    fn lstm_zero_params_give_zero_output() {
        let x = Tensor3::from_vec(
            2,
            3,
            2,
            vec![1.0, -4.0, 2.0, 0.3, 9.0, 1.0, 0.0, 2.0, 5.0, 5.0, -1.0, 1.0],
        )
        .unwrap();
        let (y, s) = lstm_forward(&x, &LstmParams::zeros(2, 3), None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(s.h.data().iter().all(|&v| v == 0.0));
        assert!(s.c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_matches_hand_evaluation() {
        // hidden size 1, input size 1; gates i, f, g, o
        let p = LstmParams {
            input_weights: Matrix::from_vec(1, 4, vec![0.5, -0.3, 0.8, 0.2]).unwrap(),
            recurrent_weights: Matrix::from_vec(1, 4, vec![0.1, 0.4, -0.6, 0.7]).unwrap(),
            bias: vec![0.05, 1.0, -0.1, 0.0],
            hidden: 1,
        };
        let (x, h0, c0) = (1.5, 0.2, -0.4);
        let init = LstmState {
            h: Matrix::filled(1, 1, h0),
            c: Matrix::filled(1, 1, c0),
        };
        let (y, s) = lstm_forward(&t3(1, 1, 1, vec![x]), &p, Some(&init)).unwrap();
        let i = sigmoid(0.5 * x + 0.1 * h0 + 0.05);
        let f = sigmoid(-0.3 * x + 0.4 * h0 + 1.0);
        let gg = (0.8 * x - 0.6 * h0 - 0.1).tanh();
        let o = sigmoid(0.2 * x + 0.7 * h0);
        let c = f * c0 + i * gg;
        let h = o * c.tanh();
        assert!((s.c.data()[0] - c).abs() < 1e-15);
        assert!((s.h.data()[0] - h).abs() < 1e-15);
        assert!((y.data()[0] - h).abs() < 1e-15);
    }

    #[test]
    fn lstm_sequence_equals_chained_steps() {
        let mut rng = stream_rng(3, 0);
        let p = LstmParams {
            input_weights: glorot_normal(2, 12, &mut rng),
            recurrent_weights: glorot_normal(3, 12, &mut rng),
            bias: vec![0.1; 12],
            hidden: 3,
        };
        let data: Vec<f64> = normal_vec(&mut rng, 2 * 3 * 2);
        let x = t3(2, 3, 2, data);
        let (full, final_state) = lstm_forward(&x, &p, None).unwrap();
        let mut state = LstmState::zeros(2, 3);
        for t in 0..3 {
            let step: Vec<f64> = (0..2).flat_map(|b| x.step(b, t).to_vec()).collect();
            let (y, s) = lstm_forward(&t3(2, 1, 2, step), &p, Some(&state)).unwrap();
            for b in 0..2 {
                assert_eq!(y.step(b, 0), full.step(b, t));
            }
            state = s;
        }
        assert_eq!(state, final_state);
    }

    #[test]
    fn lstm_is_causal() {
        let mut rng = stream_rng(4, 0);
        let p = LstmParams {
            input_weights: glorot_normal(2, 8, &mut rng),
            recurrent_weights: glorot_normal(2, 8, &mut rng),
            bias: vec![0.0; 8],
            hidden: 2,
        };
        let mut x = t3(1, 4, 2, normal_vec(&mut rng, 8));
        let (y0, _) = lstm_forward(&x, &p, None).unwrap();
        x.set(0, 3, 0, 10.0);
        x.set(0, 2, 1, -10.0);
        let (y1, _) = lstm_forward(&x, &p, None).unwrap();
        assert_eq!(y0.step(0, 0), y1.step(0, 0));
        assert_eq!(y0.step(0, 1), y1.step(0, 1));
        assert_ne!(y0.step(0, 2), y1.step(0, 2));
    }
}
