//! Loss terms, as graph operations and as plain-value helpers.
//!
//! The graph versions are what training differentiates; the value helpers
//! evaluate the same graph code on constant inputs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, NnError};
use crate::nn::{Graph, Matrix, Tensor3, Var};

/// Log-variances are clamped into this range before use.
pub const LOGVAR_CLAMP: (f64, f64) = (-10.0, 10.0);
/// Probabilities are clamped into this range before taking logs.
pub const PROB_CLAMP: (f64, f64) = (1e-7, 1.0 - 1e-7);

/// Weights of the individual loss summands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_recon: f64,
    pub w_kl: f64,
    pub w_label: f64,
    /// Extra weight on the label loss of anomalous windows. `None` derives it
    /// from the training labels as `#normal / #anomalous`.
    pub w_anomaly_class: Option<f64>,
    pub w_metadata: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_recon: 1.0,
            w_kl: 0.01,
            w_label: 1.0,
            w_anomaly_class: None,
            w_metadata: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            self.w_recon,
            self.w_kl,
            self.w_label,
            self.w_anomaly_class.unwrap_or(1.0),
            self.w_metadata,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ModelError::Architecture(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(ModelError::Architecture(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn anomaly_class_weight(&self) -> f64 {
        self.w_anomaly_class.unwrap_or(1.0)
    }
}

/// `−0.5 · Σ_i (1 + logvar_i − mu_i² − exp(logvar_i))`, summed over latent
/// columns and averaged over rows. `logvar` is used as given.
pub fn kl_term(g: &mut Graph, mu: Var, logvar: Var) -> Result<Var, NnError> {
    let rows = g.shape(mu).0.max(1);
    let mu2 = g.square(mu);
    let ev = g.exp(logvar);
    let a = g.add_scalar(logvar, 1.0);
    let a = g.sub(a, mu2)?;
    let a = g.sub(a, ev)?;
    let s = g.sum(a);
    Ok(g.scale(s, -0.5 / rows as f64))
}

/// Mean of `(x − x̃)²`.
pub fn squared_error_term(g: &mut Graph, x: Var, recon: Var) -> Result<Var, NnError> {
    let d = g.sub(x, recon)?;
    let d2 = g.square(d);
    Ok(g.mean(d2))
}

/// Elementwise `0.5 · (ln 2π + lv + (x − mean)² · exp(−lv))` with `lv` the
/// clamped log-variance.
pub fn gaussian_nll_elements(
    g: &mut Graph,
    x: Var,
    mean: Var,
    logvar: Var,
) -> Result<Var, NnError> {
    let lv = g.clamp(logvar, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1);
    let d = g.sub(x, mean)?;
    let d2 = g.square(d);
    let neg = g.scale(lv, -1.0);
    let prec = g.exp(neg);
    let q = g.mul(d2, prec)?;
    let s = g.add(q, lv)?;
    let s = g.add_scalar(s, (2.0 * PI).ln());
    Ok(g.scale(s, 0.5))
}

/// Elementwise `−[x ln p + (1 − x) ln(1 − p)]` with `p` clamped.
pub fn bernoulli_nll_elements(g: &mut Graph, x: Var, p: Var) -> Result<Var, NnError> {
    let pc = g.clamp(p, PROB_CLAMP.0, PROB_CLAMP.1);
    let lp = g.ln(pc);
    let neg = g.scale(pc, -1.0);
    let q = g.add_scalar(neg, 1.0);
    let lq = g.ln(q);
    let xv = g.value(x).clone();
    let one_minus_x = g.constant(xv.map(|v| 1.0 - v));
    let a = g.mul(x, lp)?;
    let b = g.mul(one_minus_x, lq)?;
    let s = g.add(a, b)?;
    Ok(g.scale(s, -1.0))
}

/// Elementwise `−ln p` for a clamped probability.
pub fn neg_log_elements(g: &mut Graph, p: Var) -> Var {
    let pc = g.clamp(p, PROB_CLAMP.0, PROB_CLAMP.1);
    let l = g.ln(pc);
    g.scale(l, -1.0)
}

fn row(values: &[f64]) -> Matrix {
    Matrix::from_vec(1, values.len(), values.to_vec()).expect("single row")
}

fn check_len(a: usize, b: usize, what: &str) -> Result<(), ModelError> {
    if a != b {
        return Err(ModelError::Nn(NnError::Shape(format!(
            "{what}: lengths {a} and {b} differ"
        ))));
    }
    Ok(())
}

/// KL divergence of `N(mu, exp(logvar))` from `N(0, 1)` for one latent vector.
pub fn kl_loss(mu: &[f64], logvar: &[f64]) -> Result<f64, ModelError> {
    check_len(mu.len(), logvar.len(), "kl_loss")?;
    let mut g = Graph::new();
    let m = g.constant(row(mu));
    let l = g.constant(row(logvar));
    let k = kl_term(&mut g, m, l)?;
    Ok(g.scalar(k))
}

/// Mean over batch, time and features of `(x − x̃)²`.
pub fn reconstruction_error(x: &Tensor3, recon: &Tensor3) -> Result<f64, ModelError> {
    if x.shape() != recon.shape() {
        return Err(ModelError::Nn(NnError::Shape(format!(
            "reconstruction_error: {:?} vs {:?}",
            x.shape(),
            recon.shape()
        ))));
    }
    let mut g = Graph::new();
    let a = g.constant(x.to_matrix());
    let b = g.constant(recon.to_matrix());
    let e = squared_error_term(&mut g, a, b)?;
    Ok(g.scalar(e))
}

/// Mean Gaussian negative log-likelihood of `x` under `N(mean, exp(logvar))`.
pub fn gaussian_nll(x: &[f64], mean: &[f64], logvar: &[f64]) -> Result<f64, ModelError> {
    check_len(x.len(), mean.len(), "gaussian_nll")?;
    check_len(x.len(), logvar.len(), "gaussian_nll")?;
    let mut g = Graph::new();
    let xv = g.constant(row(x));
    let m = g.constant(row(mean));
    let l = g.constant(row(logvar));
    let e = gaussian_nll_elements(&mut g, xv, m, l)?;
    let s = g.mean(e);
    Ok(g.scalar(s))
}

/// Mean Bernoulli negative log-likelihood of binary `x` under `p`.
pub fn bernoulli_nll(x: &[f64], p: &[f64]) -> Result<f64, ModelError> {
    check_len(x.len(), p.len(), "bernoulli_nll")?;
    if let Some(v) = x.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(ModelError::Data(format!(
            "bernoulli target {v} is not in {{0, 1}}"
        )));
    }
    let mut g = Graph::new();
    let xv = g.constant(row(x));
    let pv = g.constant(row(p));
    let e = bernoulli_nll_elements(&mut g, xv, pv)?;
    let s = g.mean(e);
    Ok(g.scalar(s))
}

/// `−ln probs[true_class]`.
pub fn categorical_nll(probs: &[f64], true_class: usize) -> Result<f64, ModelError> {
    let p = probs.get(true_class).ok_or_else(|| {
        ModelError::Data(format!(
            "class {true_class} out of range for {} categories",
            probs.len()
        ))
    })?;
    Ok(-p.clamp(PROB_CLAMP.0, PROB_CLAMP.1).ln())
}
