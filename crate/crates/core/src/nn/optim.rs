//! Adam with L2 weight decay and a plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamStore};
use super::Matrix;
use crate::error::NnError;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_L2: f64 = 1e-3;
pub const LEARNING_RATE_FLOOR: f64 = 1e-4;
pub const DEFAULT_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
    pub patience: usize,
    pub lr_floor: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_lambda: DEFAULT_L2,
            patience: DEFAULT_PATIENCE,
            lr_floor: LEARNING_RATE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Plateau {
    best: f64,
    wait: usize,
    seen: usize,
}

/// Moment accumulators mirroring a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
    pub patience: usize,
    pub lr_floor: f64,
    plateau: Plateau,
}

impl AdamState {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = store
            .ids()
            .map(|id| {
                let (r, c) = store.get(id).shape();
                Matrix::zeros(r, c)
            })
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            l2_lambda: cfg.l2_lambda,
            patience: cfg.patience,
            lr_floor: cfg.lr_floor,
            plateau: Plateau {
                best: f64::INFINITY,
                wait: 0,
                seen: 0,
            },
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Every parameter with a gradient entry is
/// updated; `l2_lambda · w` is added to its gradient first.
pub fn adam_step(
    params: &mut ParamStore,
    gradients: &Gradients,
    state: &mut AdamState,
) -> Result<(), NnError> {
    for (id, g) in gradients.params() {
        let shape = params.get(*id).shape();
        if g.shape() != shape || state.first_moment[id.0].shape() != shape {
            return Err(NnError::Shape(format!(
                "gradient {:?} for `{}` does not match parameter {:?}",
                g.shape(),
                params.name(*id),
                shape
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps, lr, l2) = (
        state.beta1,
        state.beta2,
        state.epsilon,
        state.learning_rate,
        state.l2_lambda,
    );
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (id, g) in gradients.params() {
        let w = params.get_mut(*id).data_mut();
        let m = state.first_moment[id.0].data_mut();
        let v = state.second_moment[id.0].data_mut();
        for (((wi, &gi), mi), vi) in w.iter_mut().zip(g.data()).zip(m).zip(v) {
            let gi = gi + l2 * *wi;
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *wi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Halves the learning rate whenever the best validation loss has not improved
/// for `patience` consecutive epochs, never going below the floor.
///
/// Entries of `validation_loss_history` already seen by earlier calls are
/// skipped, so this can be called once per epoch with the growing history or
/// once with a complete one.
pub fn lr_schedule(state: &mut AdamState, validation_loss_history: &[f64]) {
    let start = state.plateau.seen.min(validation_loss_history.len());
    for &loss in &validation_loss_history[start..] {
        if loss < state.plateau.best {
            state.plateau.best = loss;
            state.plateau.wait = 0;
        } else {
            state.plateau.wait += 1;
            if state.plateau.wait >= state.patience {
                if state.learning_rate > state.lr_floor {
                    state.learning_rate = (state.learning_rate * 0.5).max(state.lr_floor);
                }
                state.plateau.wait = 0;
            }
        }
    }
    state.plateau.seen = validation_loss_history.len();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;

    fn single(value: f64) -> (ParamStore, crate::nn::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(1, 3, value));
        (store, id)
    }

    fn grads_for(store: &ParamStore, id: crate::nn::ParamId, g: f64) -> Gradients {
        // loss = g * sum(w)
        let mut graph = Graph::new();
        let w = graph.param(store, id);
        let s = graph.sum(w);
        let l = graph.scale(s, g);
        graph.backward(l).unwrap()
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let (mut store, id) = single(0.3);
        let cfg = AdamConfig {
            l2_lambda: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&store, cfg);
        let g = 0.25;
        {
            let gr = grads_for(&store, id, g);
            adam_step(&mut store, &gr, &mut st)
        }
        .unwrap();
        let want = 0.3 - 1e-3 * g / (g.abs() + 1e-8);
        for &w in store.get(id).data() {
            assert!((w - want).abs() < 1e-15);
        }
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn zero_gradient_without_l2_is_noop() {
        let (mut store, id) = single(0.7);
        let cfg = AdamConfig {
            l2_lambda: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&store, cfg);
        {
            let gr = grads_for(&store, id, 0.0);
            adam_step(&mut store, &gr, &mut st)
        }
        .unwrap();
        assert_eq!(store.get(id).data(), &[0.7; 3]);
    }

    #[test]
    fn l2_adds_weight_decay_gradient() {
        // effective gradient = 1e-3 · 1 → first step moves by lr · g/(|g|+ε)
        let (mut store, id) = single(1.0);
        let mut st = AdamState::new(&store, AdamConfig::default());
        {
            let gr = grads_for(&store, id, 0.0);
            adam_step(&mut store, &gr, &mut st)
        }
        .unwrap();
        let g = 1e-3;
        let want = 1.0 - 1e-3 * g / (g + 1e-8);
        assert!((store.get(id).data()[0] - want).abs() < 1e-15);
        assert!((st.first_moment[0].data()[0] - 0.1 * g).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let (mut store, id) = single(1.0);
        let mut st = AdamState::new(&store, AdamConfig::default());
        let (other, oid) = {
            let mut s = ParamStore::new();
            let i = s.add("w", Matrix::zeros(2, 2));
            (s, i)
        };
        assert_eq!(oid, id);
        let g = grads_for(&other, oid, 1.0);
        assert!(adam_step(&mut store, &g, &mut st).is_err());
    }

    #[test]
    fn schedule_keeps_lr_on_improvement() {
        let (store, _) = single(0.0);
        let mut st = AdamState::new(&store, AdamConfig::default());
        let hist: Vec<f64> = (0..30).map(|i| 10.0 - i as f64).collect();
        lr_schedule(&mut st, &hist);
        assert_eq!(st.learning_rate, 1e-3);
    }

    #[test]
    fn schedule_flat_history_halves_at_most_twice() {
        let (store, _) = single(0.0);
        let hist = vec![1.0; 30];
        let mut whole = AdamState::new(&store, AdamConfig::default());
        lr_schedule(&mut whole, &hist);
        // epoch 0 sets the best; waits reach 10 at epochs 10 and 20
        assert_eq!(whole.learning_rate, 2.5e-4);
        let mut stepwise = AdamState::new(&store, AdamConfig::default());
        for n in 1..=hist.len() {
            lr_schedule(&mut stepwise, &hist[..n]);
        }
        assert_eq!(stepwise.learning_rate, whole.learning_rate);
        assert!(whole.learning_rate >= LEARNING_RATE_FLOOR);
    }

    #[test]
    fn schedule_respects_floor() {
        let (store, _) = single(0.0);
        let mut st = AdamState::new(
            &store,
            AdamConfig {
                learning_rate: 1e-4,
                ..AdamConfig::default()
            },
        );
        lr_schedule(&mut st, &[1.0; 50]);
        assert_eq!(st.learning_rate, 1e-4);
        let mut st = AdamState::new(&store, AdamConfig::default());
        lr_schedule(&mut st, &[1.0; 200]);
        assert_eq!(st.learning_rate, 1e-4);
    }
}
