//! LSTM variational autoencoders and their loss assembly.
//!
//! One network type covers four variants. `Err` reconstructs every column and
//! is scored by squared error. `Prob` emits Gaussian heads for continuous
//! columns and Bernoulli heads for binary ones and is scored by negative log
//! reconstruction probability. `SparseLabels` adds a softmax label head `π`
//! beside the latent space, and `Metadata` adds a second softmax head over
//! metadata categories. Both heads are concatenated into the decoder input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::VaeArchitecture;
use super::encoder::{Decoder, Encoder};
use super::losses::{
    bernoulli_nll_elements, gaussian_nll_elements, kl_term, neg_log_elements, LossWeights,
    LOGVAR_CLAMP,
};
use crate::data::{ColumnKind, WindowBatch};
use crate::error::{ModelError, NnError};
use crate::nn::rng::{normal_vec, stream_rng, streams};
use crate::nn::{Activation, Checkpoint, Dense, Graph, Matrix, ParamStore, Tensor3, Var};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
/// Latent samples drawn per window when scoring.
pub const DEFAULT_SCORING_SAMPLES: usize = 10;
/// Column of `π` that holds the anomalous class.
pub const ANOMALOUS: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VaeKind {
    Err,
    Prob,
    SparseLabels,
    Metadata,
}

impl VaeKind {
    pub fn is_probabilistic(self) -> bool {
        self != VaeKind::Err
    }

    pub fn has_label_head(self) -> bool {
        matches!(self, VaeKind::SparseLabels | VaeKind::Metadata)
    }

    pub fn has_metadata_head(self) -> bool {
        self == VaeKind::Metadata
    }
}

/// Latent statistics per row: `sample = mu + exp(0.5 · logvar) ⊙ noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub mu: Matrix,
    pub logvar: Matrix,
    pub sample: Matrix,
}

pub fn reparameterize(
    mu: &Matrix,
    logvar: &Matrix,
    noise: &Matrix,
) -> Result<LatentSample, ModelError> {
    if mu.shape() != logvar.shape() || mu.shape() != noise.shape() {
        return Err(NnError::Shape(format!(
            "reparameterize: mu {:?}, logvar {:?}, noise {:?}",
            mu.shape(),
            logvar.shape(),
            noise.shape()
        ))
        .into());
    }
    let std = logvar.map(|v| (0.5 * v).exp());
    let sample = mu.zip_map(&std.zip_map(noise, |s, n| s * n), |m, d| m + d);
    Ok(LatentSample {
        mu: mu.clone(),
        logvar: logvar.clone(),
        sample,
    })
}

/// Decoder outputs as `[B, T, ·]` tensors.
///
/// For `Err` models `mean` reconstructs every column; otherwise it holds the
/// Gaussian means of the continuous columns, with `logvar` their log
/// variances and `binary_mean` the Bernoulli probabilities of binary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionHeads {
    pub mean: Tensor3,
    pub logvar: Option<Tensor3>,
    pub binary_mean: Option<Tensor3>,
}

/// Everything one forward pass produces, per row `b·T + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeOutput {
    pub latent: LatentSample,
    /// `[anomalous, normal]` probabilities.
    pub pi: Option<Matrix>,
    pub metadata: Option<Matrix>,
    pub heads: ReconstructionHeads,
    pub decoder_input_width: usize,
}

/// Column indices of each kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSplit {
    pub continuous: Vec<usize>,
    pub binary: Vec<usize>,
}

impl ColumnSplit {
    pub fn new(kinds: &[ColumnKind]) -> Self {
        let pick = |k| {
            kinds
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == k)
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            continuous: pick(ColumnKind::Continuous),
            binary: pick(ColumnKind::Binary),
        }
    }
}

/// Values of the loss summands. Absent terms are exactly `0.0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub label: f64,
    pub metadata: f64,
}

impl LossBreakdown {
    /// Name of the first non-finite summand, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("reconstruction", self.reconstruction),
            ("kl", self.kl),
            ("label", self.label),
            ("metadata", self.metadata),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Graph nodes of one forward pass.
pub(crate) struct Nodes {
    pub mu: Var,
    pub logvar: Var,
    pub sample: Var,
    pub pi: Option<Var>,
    pub metadata: Option<Var>,
    pub mean: Var,
    pub out_logvar: Option<Var>,
    pub binary: Option<Var>,
    pub decoder_input: Var,
}

/// The loss-relevant subset of [`Nodes`].
pub(crate) struct LossInputs {
    pub mu: Var,
    pub logvar: Var,
    pub pi: Option<Var>,
    pub metadata: Option<Var>,
    pub mean: Var,
    pub out_logvar: Option<Var>,
    pub binary: Option<Var>,
}

impl From<&Nodes> for LossInputs {
    fn from(n: &Nodes) -> Self {
        Self {
            mu: n.mu,
            logvar: n.logvar,
            pi: n.pi,
            metadata: n.metadata,
            mean: n.mean,
            out_logvar: n.out_logvar,
            binary: n.binary,
        }
    }
}

pub(crate) struct LossNodes {
    pub total: Var,
    pub reconstruction: Option<Var>,
    pub kl: Var,
    pub label: Option<Var>,
    pub metadata: Option<Var>,
}

impl LossNodes {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        let v = |n: Option<Var>| n.map_or(0.0, |n| g.scalar(n));
        LossBreakdown {
            total: g.scalar(self.total),
            reconstruction: v(self.reconstruction),
            kl: g.scalar(self.kl),
            label: v(self.label),
            metadata: v(self.metadata),
        }
    }
}

/// Builds every loss summand for a batch of `batch` windows of length `time`.
///
/// `x` is the `(B·T) × F` input. Per-window labels and metadata are broadcast
/// over time. When `mask_anomalous` is set, rows of windows labeled anomalous
/// are left out of the reconstruction sum; the normalizer stays `B·T·F`, so a
/// fully unlabeled batch gives the plain mean.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble_loss(
    g: &mut Graph,
    inputs: &LossInputs,
    x: &Matrix,
    columns: &ColumnSplit,
    probabilistic: bool,
    batch: usize,
    time: usize,
    labels: &[Option<bool>],
    metadata: &[Option<usize>],
    mask_anomalous: bool,
    w: &LossWeights,
) -> Result<LossNodes, ModelError> {
    let rows = batch * time;
    if x.rows() != rows || labels.len() != batch || metadata.len() != batch {
        return Err(ModelError::Data(format!(
            "loss inputs: {} rows, {} labels, {} metadata for {batch} windows of {time}",
            x.rows(),
            labels.len(),
            metadata.len()
        )));
    }
    let keep: Vec<usize> = (0..rows)
        .filter(|r| !(mask_anomalous && labels[r / time] == Some(true)))
        .collect();
    let all_kept = keep.len() == rows;

    let mut recon_terms = Vec::new();
    let mut masked_sum = |g: &mut Graph, elems: Var, cols: usize| -> Result<(), NnError> {
        if keep.is_empty() || cols == 0 {
            return Ok(());
        }
        let kept = if all_kept {
            elems
        } else {
            g.gather_rows(elems, keep.clone())?
        };
        let s = g.sum(kept);
        recon_terms.push(g.scale(s, 1.0 / (rows * cols) as f64));
        Ok(())
    };
    if probabilistic {
        if !columns.continuous.is_empty() {
            let xc = g.constant(x.select_cols(&columns.continuous));
            let lv = inputs
                .out_logvar
                .ok_or_else(|| ModelError::Architecture("missing logvar head".into()))?;
            let e = gaussian_nll_elements(g, xc, inputs.mean, lv)?;
            masked_sum(g, e, columns.continuous.len())?;
        }
        if !columns.binary.is_empty() {
            let xb = x.select_cols(&columns.binary);
            if let Some(v) = xb.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(ModelError::Data(format!(
                    "binary column holds {v}, expected 0 or 1"
                )));
            }
            let xb = g.constant(xb);
            let p = inputs
                .binary
                .ok_or_else(|| ModelError::Architecture("missing binary head".into()))?;
            let e = bernoulli_nll_elements(g, xb, p)?;
            masked_sum(g, e, columns.binary.len())?;
        }
    } else {
        let xv = g.constant(x.clone());
        let d = g.sub(xv, inputs.mean)?;
        let e = g.square(d);
        masked_sum(g, e, x.cols())?;
    }
    let reconstruction = match recon_terms.as_slice() {
        [] => None,
        [a] => Some(*a),
        [a, b] => Some(g.add(*a, *b)?),
        _ => unreachable!(),
    };

    let kl = kl_term(g, inputs.mu, inputs.logvar)?;

    let label = match inputs.pi {
        Some(pi) if labels.iter().any(Option::is_some) => {
            let idx: Vec<usize> = (0..rows).filter(|r| labels[r / time].is_some()).collect();
            let aw = w.anomaly_class_weight();
            let mut target = Vec::with_capacity(idx.len() * 2);
            let mut weight = Vec::with_capacity(idx.len() * 2);
            for &r in &idx {
                let anomalous = labels[r / time] == Some(true);
                let t = if anomalous { [1.0, 0.0] } else { [0.0, 1.0] };
                target.extend_from_slice(&t);
                // half per column: the label loss is the mean over both columns
                let k = if anomalous { 0.5 * aw } else { 0.5 };
                weight.extend_from_slice(&[k, k]);
            }
            let n = idx.len();
            let p = g.gather_rows(pi, idx)?;
            let t = g.constant(Matrix::from_vec(n, 2, target)?);
            let e = bernoulli_nll_elements(g, t, p)?;
            let wv = g.constant(Matrix::from_vec(n, 2, weight)?);
            let e = g.mul(e, wv)?;
            let s = g.sum(e);
            Some(g.scale(s, 1.0 / rows as f64))
        }
        _ => None,
    };

    let meta = match inputs.metadata {
        Some(m) if metadata.iter().any(Option::is_some) => {
            let k = g.shape(m).1;
            let idx: Vec<usize> = (0..rows).filter(|r| metadata[r / time].is_some()).collect();
            let mut onehot = Matrix::zeros(idx.len(), k);
            for (i, &r) in idx.iter().enumerate() {
                let c = metadata[r / time].expect("filtered");
                if c >= k {
                    return Err(ModelError::Data(format!(
                        "metadata class {c} out of range for {k} categories"
                    )));
                }
                onehot.set(i, c, 1.0);
            }
            let p = g.gather_rows(m, idx)?;
            let nl = neg_log_elements(g, p);
            let oh = g.constant(onehot);
            let e = g.mul(nl, oh)?;
            let s = g.sum(e);
            Some(g.scale(s, 1.0 / rows as f64))
        }
        _ => None,
    };

    let mut total = g.scale(kl, w.w_kl);
    for (term, weight) in [
        (reconstruction, w.w_recon),
        (label, w.w_label),
        (meta, w.w_metadata),
    ] {
        if let Some(t) = term {
            let s = g.scale(t, weight);
            total = g.add(total, s)?;
        }
    }
    Ok(LossNodes {
        total,
        reconstruction,
        kl,
        label,
        metadata: meta,
    })
}

/// Per-window anomaly evidence from a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores {
    /// Reconstruction deviation; higher is more anomalous.
    pub deviation: Vec<f64>,
    /// Time-averaged `π[anomalous]`.
    pub pi_anomalous: Option<Vec<f64>>,
    /// Time-averaged metadata probabilities, one vector per window.
    pub metadata: Option<Vec<Vec<f64>>>,
}

/// Serialized form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeCheckpoint {
    pub schema_version: u32,
    pub kind: VaeKind,
    pub architecture: VaeArchitecture,
    pub column_kinds: Vec<ColumnKind>,
    pub metadata_classes: usize,
    pub weights: LossWeights,
    pub params: Checkpoint,
}

#[derive(Debug, Clone)]
pub struct Vae {
    kind: VaeKind,
    arch: VaeArchitecture,
    columns: ColumnSplit,
    column_kinds: Vec<ColumnKind>,
    metadata_classes: usize,
    pub weights: LossWeights,
    pub(crate) store: ParamStore,
    encoder: Encoder,
    mu: Dense,
    logvar: Dense,
    label_head: Option<Dense>,
    metadata_head: Option<Dense>,
    decoder: Decoder,
    out_mean: Dense,
    out_logvar: Option<Dense>,
    out_binary: Option<Dense>,
}

impl Vae {
    /// Builds a freshly initialized model. `metadata_classes` is only used by
    /// [`VaeKind::Metadata`].
    pub fn new(
        kind: VaeKind,
        arch: VaeArchitecture,
        column_kinds: &[ColumnKind],
        metadata_classes: usize,
        weights: LossWeights,
        seed: u64,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        weights.validate()?;
        if column_kinds.len() != arch.input_width {
            return Err(ModelError::Architecture(format!(
                "{} column kinds for input width {}",
                column_kinds.len(),
                arch.input_width
            )));
        }
        if kind.has_metadata_head() && metadata_classes < 2 {
            return Err(ModelError::Architecture(
                "metadata head needs at least two categories".into(),
            ));
        }
        let mut rng = stream_rng(seed, streams::INIT);
        Ok(Self::build(
            kind,
            arch,
            column_kinds,
            metadata_classes,
            weights,
            &mut rng,
        ))
    }

    fn build<R: Rng + ?Sized>(
        kind: VaeKind,
        arch: VaeArchitecture,
        column_kinds: &[ColumnKind],
        metadata_classes: usize,
        weights: LossWeights,
        rng: &mut R,
    ) -> Self {
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, "encoder", &arch, rng);
        let hw = encoder.output_width;
        let z = arch.bottleneck_width;
        let mu = Dense::new(&mut store, "mu", hw, z, Activation::Linear, rng);
        let logvar = Dense::new(&mut store, "logvar", hw, z, Activation::Linear, rng);
        let label_head = kind
            .has_label_head()
            .then(|| Dense::new(&mut store, "label_head", hw, 2, Activation::Softmax, rng));
        let metadata_classes = if kind.has_metadata_head() {
            metadata_classes
        } else {
            0
        };
        let metadata_head = kind.has_metadata_head().then(|| {
            Dense::new(
                &mut store,
                "metadata_head",
                hw,
                metadata_classes,
                Activation::Softmax,
                rng,
            )
        });
        let c_width = z + if kind.has_label_head() { 2 } else { 0 } + metadata_classes;
        let decoder = Decoder::new(&mut store, "decoder", &arch, c_width, rng);
        let dw = decoder.output_width;
        let columns = ColumnSplit::new(column_kinds);
        let (out_mean, out_logvar, out_binary) = if kind.is_probabilistic() {
            let nc = columns.continuous.len();
            let nb = columns.binary.len();
            // a zero-width mean head keeps the struct uniform when every column is binary
            let mean = Dense::new(&mut store, "out_mean", dw, nc, Activation::Linear, rng);
            let lv = (nc > 0)
                .then(|| Dense::new(&mut store, "out_logvar", dw, nc, Activation::Linear, rng));
            let bin = (nb > 0)
                .then(|| Dense::new(&mut store, "out_binary", dw, nb, Activation::Sigmoid, rng));
            (mean, lv, bin)
        } else {
            let mean = Dense::new(
                &mut store,
                "out_mean",
                dw,
                arch.input_width,
                Activation::Linear,
                rng,
            );
            (mean, None, None)
        };
        Self {
            kind,
            arch,
            columns,
            column_kinds: column_kinds.to_vec(),
            metadata_classes,
            weights,
            store,
            encoder,
            mu,
            logvar,
            label_head,
            metadata_head,
            decoder,
            out_mean,
            out_logvar,
            out_binary,
        }
    }

    pub fn kind(&self) -> VaeKind {
        self.kind
    }

    pub fn architecture(&self) -> &VaeArchitecture {
        &self.arch
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Width of the decoder input `[s, π, metadata]`.
    pub fn decoder_input_width(&self) -> usize {
        self.arch.bottleneck_width
            + if self.kind.has_label_head() { 2 } else { 0 }
            + self.metadata_classes
    }

    /// Parameter ids of the label head (weights, bias).
    pub fn label_head_params(&self) -> Option<(crate::nn::ParamId, crate::nn::ParamId)> {
        self.label_head.as_ref().map(|d| (d.weights, d.bias))
    }

    pub(crate) fn forward_graph(
        &self,
        g: &mut Graph,
        x: Var,
        batch: usize,
        time: usize,
        noise: Matrix,
    ) -> Result<Nodes, ModelError> {
        let (rows, f) = g.shape(x);
        if f != self.arch.input_width || rows != batch * time {
            return Err(NnError::Dimension {
                layer: "vae.input".into(),
                detail: format!(
                    "expected {}x{}, got {rows}x{f}",
                    batch * time,
                    self.arch.input_width
                ),
            }
            .into());
        }
        let s = &self.store;
        let h = self.encoder.forward(g, s, x, batch, time)?;
        let mu = self.mu.forward(g, s, h)?;
        let lv = self.logvar.forward(g, s, h)?;
        let lv = g.clamp(lv, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1);
        let half = g.scale(lv, 0.5);
        let std = g.exp(half);
        let eps = g.constant(noise);
        let d = g.mul(std, eps)?;
        let sample = g.add(mu, d)?;
        let pi = self
            .label_head
            .as_ref()
            .map(|l| l.forward(g, s, h))
            .transpose()?;
        let metadata = self
            .metadata_head
            .as_ref()
            .map(|l| l.forward(g, s, h))
            .transpose()?;
        let parts: Vec<Var> = [Some(sample), pi, metadata].into_iter().flatten().collect();
        let c = if parts.len() == 1 {
            sample
        } else {
            g.concat_cols(&parts)?
        };
        let dh = self.decoder.forward(g, s, c, batch, time)?;
        let mean = self.out_mean.forward(g, s, dh)?;
        let out_logvar = self
            .out_logvar
            .as_ref()
            .map(|l| l.forward(g, s, dh))
            .transpose()?;
        let binary = self
            .out_binary
            .as_ref()
            .map(|l| l.forward(g, s, dh))
            .transpose()?;
        Ok(Nodes {
            mu,
            logvar: lv,
            sample,
            pi,
            metadata,
            mean,
            out_logvar,
            binary,
            decoder_input: c,
        })
    }

    /// One forward pass. `noise` defaults to zeros, giving `sample = mu`.
    pub fn forward(&self, x: &Tensor3, noise: Option<&Matrix>) -> Result<VaeOutput, ModelError> {
        let (b, t, _) = x.shape();
        let z = self.arch.bottleneck_width;
        let noise = noise.cloned().unwrap_or_else(|| Matrix::zeros(b * t, z));
        let mut g = Graph::new();
        let xv = g.constant(x.to_matrix());
        let n = self.forward_graph(&mut g, xv, b, t, noise)?;
        let tensor = |g: &Graph, v: Var| Tensor3::from_matrix(g.value(v).clone(), b, t);
        Ok(VaeOutput {
            latent: LatentSample {
                mu: g.value(n.mu).clone(),
                logvar: g.value(n.logvar).clone(),
                sample: g.value(n.sample).clone(),
            },
            pi: n.pi.map(|p| g.value(p).clone()),
            metadata: n.metadata.map(|p| g.value(p).clone()),
            heads: ReconstructionHeads {
                mean: tensor(&g, n.mean)?,
                logvar: n.out_logvar.map(|v| tensor(&g, v)).transpose()?,
                binary_mean: n.binary.map(|v| tensor(&g, v)).transpose()?,
            },
            decoder_input_width: g.shape(n.decoder_input).1,
        })
    }

    /// Builds the training loss of a batch with fresh latent noise.
    pub(crate) fn loss_graph(
        &self,
        g: &mut Graph,
        batch: &WindowBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossNodes, ModelError> {
        let (b, t, _) = batch.x.shape();
        let z = self.arch.bottleneck_width;
        let noise = Matrix::from_vec(b * t, z, normal_vec(rng, b * t * z))?;
        let x = batch.x.to_matrix();
        let xv = g.constant(x.clone());
        let nodes = self.forward_graph(g, xv, b, t, noise)?;
        assemble_loss(
            g,
            &LossInputs::from(&nodes),
            &x,
            &self.columns,
            self.kind.is_probabilistic(),
            b,
            t,
            &batch.labels,
            &batch.metadata,
            self.kind.has_label_head(),
            &self.weights,
        )
    }

    /// Loss of a batch for the given latent noise, without gradients.
    pub fn loss(&self, batch: &WindowBatch, noise: &Matrix) -> Result<LossBreakdown, ModelError> {
        let (b, t, _) = batch.x.shape();
        let x = batch.x.to_matrix();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let nodes = self.forward_graph(&mut g, xv, b, t, noise.clone())?;
        let l = assemble_loss(
            &mut g,
            &LossInputs::from(&nodes),
            &x,
            &self.columns,
            self.kind.is_probabilistic(),
            b,
            t,
            &batch.labels,
            &batch.metadata,
            self.kind.has_label_head(),
            &self.weights,
        )?;
        Ok(l.breakdown(&g))
    }

    /// Scores windows with `samples` latent draws from the scoring stream of
    /// `seed`. Draw `l` uses the same `T × z` noise for every window, so
    /// identical windows always score identically.
    ///
    /// `Err` deviation is the squared error averaged over time, features and
    /// draws. The probabilistic deviation is the per-element negative log
    /// reconstruction probability, with likelihoods averaged over draws.
    pub fn score(
        &self,
        x: &Tensor3,
        samples: usize,
        seed: u64,
    ) -> Result<WindowScores, ModelError> {
        let samples = samples.max(1);
        let (n, t, f) = x.shape();
        let z = self.arch.bottleneck_width;
        let mut rng = stream_rng(seed, streams::SCORING_NOISE);
        let draws: Vec<Vec<f64>> = (0..samples).map(|_| normal_vec(&mut rng, t * z)).collect();
        let elems = (t * f) as f64;
        let mut per_draw = vec![Vec::with_capacity(n); samples];
        let mut pi_anom = self.label_head.as_ref().map(|_| Vec::with_capacity(n));
        let mut meta = self.metadata_head.as_ref().map(|_| Vec::with_capacity(n));
        const CHUNK: usize = 128;
        let idx: Vec<usize> = (0..n).collect();
        for chunk in idx.chunks(CHUNK) {
            let xb = x.select_batch(chunk);
            let b = chunk.len();
            let xm = xb.to_matrix();
            for (l, draw) in draws.iter().enumerate() {
                let mut noise = Matrix::zeros(b * t, z);
                for r in 0..b * t {
                    let s = r % t;
                    noise.row_mut(r).copy_from_slice(&draw[s * z..(s + 1) * z]);
                }
                let out = self.forward_with_matrix(&xm, b, t, noise)?;
                let sums = self.window_nll_sums(&xm, &out, b, t);
                per_draw[l].extend(sums);
                if l == 0 {
                    if let (Some(acc), Some(p)) = (pi_anom.as_mut(), out.pi.as_ref()) {
                        for w in 0..b {
                            let m =
                                (0..t).map(|s| p.get(w * t + s, ANOMALOUS)).sum::<f64>() / t as f64;
                            acc.push(m);
                        }
                    }
                    if let (Some(acc), Some(p)) = (meta.as_mut(), out.metadata.as_ref()) {
                        let k = p.cols();
                        for w in 0..b {
                            let mut v = vec![0.0; k];
                            for s in 0..t {
                                for (c, vc) in v.iter_mut().enumerate() {
                                    *vc += p.get(w * t + s, c) / t as f64;
                                }
                            }
                            acc.push(v);
                        }
                    }
                }
            }
        }
        let deviation = (0..n)
            .map(|w| {
                let sums: Vec<f64> = per_draw.iter().map(|d| d[w]).collect();
                if self.kind.is_probabilistic() {
                    // −ln mean_l exp(−S_l), via log-sum-exp
                    let m = sums.iter().cloned().fold(f64::INFINITY, f64::min);
                    let acc: f64 =
                        sums.iter().map(|s| (-(s - m)).exp()).sum::<f64>() / samples as f64;
                    (m - acc.ln()) / elems
                } else {
                    sums.iter().sum::<f64>() / (samples as f64 * elems)
                }
            })
            .collect();
        Ok(WindowScores {
            deviation,
            pi_anomalous: pi_anom,
            metadata: meta,
        })
    }

    fn forward_with_matrix(
        &self,
        x: &Matrix,
        b: usize,
        t: usize,
        noise: Matrix,
    ) -> Result<RawOutput, ModelError> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let n = self.forward_graph(&mut g, xv, b, t, noise)?;
        Ok(RawOutput {
            mean: g.value(n.mean).clone(),
            logvar: n.out_logvar.map(|v| g.value(v).clone()),
            binary: n.binary.map(|v| g.value(v).clone()),
            pi: n.pi.map(|v| g.value(v).clone()),
            metadata: n.metadata.map(|v| g.value(v).clone()),
        })
    }

    /// Per-window sum over time and features of the element losses.
    fn window_nll_sums(&self, x: &Matrix, out: &RawOutput, b: usize, t: usize) -> Vec<f64> {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut sums = vec![0.0; b];
        for r in 0..b * t {
            let xr = x.row(r);
            let mut s = 0.0;
            if self.kind.is_probabilistic() {
                let mean = out.mean.row(r);
                if let Some(lv) = &out.logvar {
                    let lv = lv.row(r);
                    for (j, &c) in self.columns.continuous.iter().enumerate() {
                        let l = lv[j].clamp(LOGVAR_CLAMP.0, LOGVAR_CLAMP.1);
                        let d = xr[c] - mean[j];
                        s += half_ln_2pi + 0.5 * (l + d * d * (-l).exp());
                    }
                }
                if let Some(p) = &out.binary {
                    let p = p.row(r);
                    for (j, &c) in self.columns.binary.iter().enumerate() {
                        let q =
                            p[j].clamp(super::losses::PROB_CLAMP.0, super::losses::PROB_CLAMP.1);
                        s -= xr[c] * q.ln() + (1.0 - xr[c]) * (1.0 - q).ln();
                    }
                }
            } else {
                s = xr
                    .iter()
                    .zip(out.mean.row(r))
                    .map(|(a, m)| (a - m) * (a - m))
                    .sum();
            }
            sums[r / t] += s;
        }
        sums
    }

    pub fn to_checkpoint(&self) -> VaeCheckpoint {
        VaeCheckpoint {
            schema_version: MODEL_SCHEMA_VERSION,
            kind: self.kind,
            architecture: self.arch.clone(),
            column_kinds: self.column_kinds.clone(),
            metadata_classes: self.metadata_classes,
            weights: self.weights,
            params: Checkpoint::from_store(&self.store),
        }
    }

    pub fn from_checkpoint(ckpt: &VaeCheckpoint) -> Result<Self, ModelError> {
        if ckpt.schema_version != MODEL_SCHEMA_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported model schema_version {}",
                ckpt.schema_version
            ))
            .into());
        }
        let mut m = Self::new(
            ckpt.kind,
            ckpt.architecture.clone(),
            &ckpt.column_kinds,
            ckpt.metadata_classes,
            ckpt.weights,
            0,
        )?;
        ckpt.params.restore_into(&mut m.store)?;
        Ok(m)
    }
}

struct RawOutput {
    mean: Matrix,
    logvar: Option<Matrix>,
    binary: Option<Matrix>,
    pi: Option<Matrix>,
    metadata: Option<Matrix>,
}

fn latent_inputs(g: &mut Graph, latent: &LatentSample) -> (Var, Var) {
    (
        g.constant(latent.mu.clone()),
        g.constant(latent.logvar.clone()),
    )
}

/// `w_recon · reconstruction_error + w_kl · kl`, with KL summed over latent
/// units and averaged over rows.
pub fn vae_err_loss(
    x: &Tensor3,
    recon: &Tensor3,
    latent: &LatentSample,
    w: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    let heads = ReconstructionHeads {
        mean: recon.clone(),
        logvar: None,
        binary_mean: None,
    };
    let kinds = vec![ColumnKind::Continuous; x.features()];
    value_loss(
        x,
        &heads,
        latent,
        &kinds,
        false,
        None,
        None,
        &[],
        &[],
        false,
        w,
    )
}

/// `w_recon · (Gaussian NLL of continuous + Bernoulli NLL of binary columns) +
/// w_kl · kl`.
pub fn vae_prob_loss(
    x: &Tensor3,
    heads: &ReconstructionHeads,
    latent: &LatentSample,
    column_kinds: &[ColumnKind],
    w: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    value_loss(
        x,
        heads,
        latent,
        column_kinds,
        true,
        None,
        None,
        &[],
        &[],
        false,
        w,
    )
}

/// Probabilistic loss plus the weighted label term. `labels` has one entry per
/// window; anomalous windows drop out of the reconstruction term and absent
/// labels contribute nothing to the label term.
pub fn vae_sl_loss(
    x: &Tensor3,
    heads: &ReconstructionHeads,
    latent: &LatentSample,
    pi: &Matrix,
    labels: &[Option<bool>],
    column_kinds: &[ColumnKind],
    w: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    value_loss(
        x,
        heads,
        latent,
        column_kinds,
        true,
        Some(pi),
        None,
        labels,
        &[],
        true,
        w,
    )
}

/// [`vae_sl_loss`] plus `w_metadata` times the categorical NLL of known
/// metadata.
#[allow(clippy::too_many_arguments)]
pub fn vae_md_loss(
    x: &Tensor3,
    heads: &ReconstructionHeads,
    latent: &LatentSample,
    pi: &Matrix,
    metadata_probs: &Matrix,
    labels: &[Option<bool>],
    metadata: &[Option<usize>],
    column_kinds: &[ColumnKind],
    w: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    value_loss(
        x,
        heads,
        latent,
        column_kinds,
        true,
        Some(pi),
        Some(metadata_probs),
        labels,
        metadata,
        true,
        w,
    )
}

#[allow(clippy::too_many_arguments)]
fn value_loss(
    x: &Tensor3,
    heads: &ReconstructionHeads,
    latent: &LatentSample,
    column_kinds: &[ColumnKind],
    probabilistic: bool,
    pi: Option<&Matrix>,
    metadata_probs: Option<&Matrix>,
    labels: &[Option<bool>],
    metadata: &[Option<usize>],
    mask: bool,
    w: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    let (b, t, f) = x.shape();
    if column_kinds.len() != f {
        return Err(ModelError::Data(format!(
            "{} column kinds for {f} features",
            column_kinds.len()
        )));
    }
    let labels: Vec<Option<bool>> = if labels.is_empty() {
        vec![None; b]
    } else {
        labels.to_vec()
    };
    let metadata: Vec<Option<usize>> = if metadata.is_empty() {
        vec![None; b]
    } else {
        metadata.to_vec()
    };
    let mut g = Graph::new();
    let (mu, logvar) = latent_inputs(&mut g, latent);
    let c = |g: &mut Graph, m: &Tensor3| g.constant(m.to_matrix());
    let inputs = LossInputs {
        mu,
        logvar,
        pi: pi.map(|p| g.constant(p.clone())),
        metadata: metadata_probs.map(|p| g.constant(p.clone())),
        mean: c(&mut g, &heads.mean),
        out_logvar: heads.logvar.as_ref().map(|v| c(&mut g, v)),
        binary: heads.binary_mean.as_ref().map(|v| c(&mut g, v)),
    };
    let l = assemble_loss(
        &mut g,
        &inputs,
        &x.to_matrix(),
        &ColumnSplit::new(column_kinds),
        probabilistic,
        b,
        t,
        &labels,
        &metadata,
        mask,
        w,
    )?;
    Ok(l.breakdown(&g))
}

/// Reads a `[anomalous, normal]` one-hot pair.
pub fn label_from_one_hot(v: &[f64]) -> Result<bool, ModelError> {
    match v {
        [a, n] if *a == 1.0 && *n == 0.0 => Ok(true),
        [a, n] if *a == 0.0 && *n == 1.0 => Ok(false),
        _ => Err(ModelError::Data(format!(
            "label {v:?} is not a one-hot [anomalous, normal] pair"
        ))),
    }
}

/// Reads a one-hot metadata vector over `classes` categories.
pub fn metadata_from_one_hot(v: &[f64], classes: usize) -> Result<usize, ModelError> {
    let ones: Vec<usize> = v
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == 1.0)
        .map(|(i, _)| i)
        .collect();
    let valid = v.len() == classes && ones.len() == 1 && v.iter().all(|&x| x == 0.0 || x == 1.0);
    if !valid {
        return Err(ModelError::Data(format!(
            "metadata {v:?} is not one-hot over {classes} categories"
        )));
    }
    Ok(ones[0])
}

impl super::train::Trainable for Vae {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Resolves an automatic anomaly-class weight to `#normal / #anomalous`
    /// over the labeled training windows.
    fn prepare(&mut self, train: &WindowBatch) -> Result<(), ModelError> {
        if self.kind.has_label_head() && self.weights.w_anomaly_class.is_none() {
            let anomalous = train.labels.iter().filter(|l| **l == Some(true)).count();
            let normal = train.labels.iter().filter(|l| **l == Some(false)).count();
            let w = if anomalous > 0 && normal > 0 {
                normal as f64 / anomalous as f64
            } else {
                1.0
            };
            self.weights.w_anomaly_class = Some(w);
        }
        Ok(())
    }

    fn batch_loss(
        &self,
        g: &mut Graph,
        batch: &WindowBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, LossBreakdown), ModelError> {
        let l = self.loss_graph(g, batch, rng)?;
        Ok((l.total, l.breakdown(g)))
    }
}
