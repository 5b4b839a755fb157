//! Synthetic production-process data.
//!
//! Continuous channels are random mixtures of a few slow shared sinusoids plus
//! Gaussian noise; binary channels are periodic on/off duty cycles. A
//! status cycle over {production, equip, rest} modulates both, and is known
//! only for a random subset of row blocks. The mixed series carries labeled
//! anomaly segments of the configured style.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::DatasetBundle;
use super::{Column, TimeSeriesDataset};
use crate::error::DataError;
use crate::nn::rng::{stream_rng, streams};
use crate::nn::Matrix;

pub const SYNTH_SCHEMA_VERSION: u32 = 1;

pub const STATUS_CATEGORIES: [&str; 3] = ["production", "equip", "rest"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyStyle {
    FeatureNoiseInjection,
    AmplitudeShift,
    StuckBinary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub schema_version: u32,
    pub name: String,
    pub continuous_channels: usize,
    pub binary_channels: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub mixed_rows: usize,
    pub anomaly_fraction: f64,
    pub anomaly_style: AnomalyStyle,
    /// Standard deviation of the background measurement noise.
    pub noise_std: f64,
    /// Standard deviation of injected noise (noise style) or offset size
    /// (shift style).
    pub anomaly_magnitude: f64,
    /// Continuous channels disturbed per anomaly segment.
    pub targeted_channels: usize,
    pub min_segment: usize,
    pub max_segment: usize,
    /// Rows spent in production, equip and rest per status cycle.
    pub status_cycle: [usize; 3],
    /// Fraction of 50-row blocks whose status is recorded.
    pub metadata_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            schema_version: SYNTH_SCHEMA_VERSION,
            name: "synthetic".into(),
            continuous_channels: 6,
            binary_channels: 2,
            train_rows: 8_000,
            validation_rows: 1_000,
            mixed_rows: 2_400,
            anomaly_fraction: 0.15,
            anomaly_style: AnomalyStyle::FeatureNoiseInjection,
            noise_std: 0.05,
            anomaly_magnitude: 1.0,
            targeted_channels: 3,
            min_segment: 20,
            max_segment: 60,
            status_cycle: [300, 60, 90],
            metadata_fraction: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let mut errs = Vec::new();
        if self.schema_version != SYNTH_SCHEMA_VERSION {
            errs.push(format!(
                "unsupported schema_version {}",
                self.schema_version
            ));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 1.0) {
            errs.push(format!(
                "anomaly_fraction must lie in (0, 1), got {}",
                self.anomaly_fraction
            ));
        }
        if self.continuous_channels + self.binary_channels == 0 {
            errs.push("at least one channel is required".into());
        }
        if self.targeted_channels > self.continuous_channels {
            errs.push("targeted_channels exceeds continuous_channels".into());
        }
        if self.min_segment == 0 || self.min_segment > self.max_segment {
            errs.push("segment bounds need 1 <= min_segment <= max_segment".into());
        }
        if self.train_rows == 0 || self.validation_rows == 0 || self.mixed_rows < 2 {
            errs.push("every split needs rows".into());
        }
        if self.status_cycle.iter().sum::<usize>() == 0 {
            errs.push("status_cycle must not be all zero".into());
        }
        if !(0.0..=1.0).contains(&self.metadata_fraction) {
            errs.push("metadata_fraction must lie in [0, 1]".into());
        }
        if !(self.noise_std >= 0.0 && self.anomaly_magnitude >= 0.0) {
            errs.push("noise_std and anomaly_magnitude must be nonnegative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(DataError::Config(errs.join("; ")))
        }
    }
}

/// An injected anomaly in the mixed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySegment {
    pub start: usize,
    pub len: usize,
    pub channels: Vec<usize>,
}

/// Generator output: the raw bundle plus the anomaly segments of the mixed
/// series.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub bundle: DatasetBundle,
    pub segments: Vec<AnomalySegment>,
}

struct Process {
    /// Period and phase of each shared source.
    sources: Vec<(f64, f64)>,
    /// Loading of every continuous channel on every source.
    loadings: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    duty_periods: Vec<usize>,
    duty_phase: Vec<usize>,
    metadata_known: Vec<bool>,
    cycle: [usize; 3],
}

const BLOCK: usize = 50;
const SOURCE_PERIODS: [f64; 3] = [97.0, 151.0, 233.0];

impl Process {
    fn new<R: Rng + ?Sized>(cfg: &SynthConfig, total_rows: usize, rng: &mut R) -> Self {
        let sources = SOURCE_PERIODS
            .iter()
            .map(|&p| (p, rng.random::<f64>() * TAU))
            .collect();
        let scale = 1.0 / (SOURCE_PERIODS.len() as f64).sqrt();
        let loadings = (0..cfg.continuous_channels)
            .map(|_| {
                SOURCE_PERIODS
                    .iter()
                    .map(|_| scale * gaussian(rng))
                    .collect()
            })
            .collect();
        let offsets = (0..cfg.continuous_channels)
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let duty_periods = (0..cfg.binary_channels).map(|j| 40 + 20 * j).collect();
        let duty_phase = (0..cfg.binary_channels)
            .map(|j| rng.random_range(0..40 + 20 * j))
            .collect();
        let metadata_known = (0..total_rows.div_ceil(BLOCK))
            .map(|_| rng.random::<f64>() < cfg.metadata_fraction)
            .collect();
        Self {
            sources,
            loadings,
            offsets,
            duty_periods,
            duty_phase,
            metadata_known,
            cycle: cfg.status_cycle,
        }
    }

    fn status(&self, t: usize) -> usize {
        let total: usize = self.cycle.iter().sum();
        let pos = t % total;
        if pos < self.cycle[0] {
            0
        } else if pos < self.cycle[0] + self.cycle[1] {
            1
        } else {
            2
        }
    }

    /// Noise-free row at global time `t`.
    fn clean_row(&self, t: usize, out: &mut Vec<f64>) {
        let status = self.status(t);
        let amp = [1.0, 0.5, 0.15][status];
        let tf = t as f64;
        let level = if status == 2 { -0.4 } else { 0.0 };
        let src: Vec<f64> = self
            .sources
            .iter()
            .map(|&(p, phase)| (TAU * tf / p + phase).sin())
            .collect();
        for (off, load) in self.offsets.iter().zip(&self.loadings) {
            let s: f64 = load.iter().zip(&src).map(|(w, v)| w * v).sum();
            out.push(off + level + amp * s);
        }
        for j in 0..self.duty_periods.len() {
            let on = match status {
                0 => (t + self.duty_phase[j]) % self.duty_periods[j] < self.duty_periods[j] / 2,
                1 => j == 0,
                _ => false,
            };
            out.push(if on { 1.0 } else { 0.0 });
        }
    }

    fn metadata(&self, t: usize) -> Option<usize> {
        self.metadata_known[t / BLOCK].then(|| self.status(t))
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

fn columns(cfg: &SynthConfig) -> Vec<Column> {
    (0..cfg.continuous_channels)
        .map(|c| Column::continuous(format!("signal_{c}")))
        .chain((0..cfg.binary_channels).map(|j| Column::binary(format!("switch_{j}"))))
        .collect()
}

/// Lays out anomaly segments covering exactly `round(f · n)` rows.
fn plan_segments<R: Rng + ?Sized>(cfg: &SynthConfig, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let total = (cfg.anomaly_fraction * n as f64).round() as usize;
    let mut lens = Vec::new();
    let mut left = total;
    while left > 0 {
        let l = rng
            .random_range(cfg.min_segment..=cfg.max_segment)
            .min(left);
        lens.push(l);
        left -= l;
    }
    let normal = n - total;
    let k = lens.len();
    // k + 1 gaps, interior gaps at least min_gap rows
    let min_gap = (cfg.min_segment / 2).max(1);
    let reserved = min_gap * k.saturating_sub(1);
    let free = normal.saturating_sub(reserved);
    let weights: Vec<f64> = (0..=k).map(|_| rng.random::<f64>() + 0.05).collect();
    let wsum: f64 = weights.iter().sum();
    let mut gaps: Vec<usize> = weights
        .iter()
        .map(|w| (w / wsum * free as f64).floor() as usize)
        .collect();
    let assigned: usize = gaps.iter().sum();
    gaps[k] += free - assigned;
    for g in gaps.iter_mut().take(k).skip(1) {
        *g += min_gap;
    }
    if normal < reserved {
        // too little room for the minimum spacing; let segments touch
        gaps.iter_mut().for_each(|g| *g = 0);
        gaps[k] = normal;
    }
    let mut out = Vec::with_capacity(k);
    let mut pos = 0;
    for (i, &l) in lens.iter().enumerate() {
        pos += gaps[i];
        out.push((pos, l));
        pos += l;
    }
    debug_assert_eq!(pos + gaps[k], n);
    out
}

/// Generates anomaly-free training/validation series and a labeled mixed
/// series. The result is a raw bundle at the ingest stage.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthOutput, DataError> {
    config.validate()?;
    let mut rng = stream_rng(seed, streams::SYNTH);
    let total = config.train_rows + config.validation_rows + config.mixed_rows;
    let process = Process::new(config, total, &mut rng);
    let cols = columns(config);
    let f = cols.len();
    let categories: Vec<String> = STATUS_CATEGORIES.iter().map(|s| s.to_string()).collect();

    let mut make = |name: &str, start: usize, rows: usize| -> (Matrix, Vec<Option<usize>>) {
        let mut data = Vec::with_capacity(rows * f);
        let mut meta = Vec::with_capacity(rows);
        let mut row = Vec::with_capacity(f);
        for t in start..start + rows {
            row.clear();
            process.clean_row(t, &mut row);
            for v in row.iter_mut().take(config.continuous_channels) {
                *v += config.noise_std * gaussian(&mut rng);
            }
            data.extend_from_slice(&row);
            meta.push(process.metadata(t));
        }
        let _ = name;
        (Matrix::from_vec(rows, f, data).expect("sized"), meta)
    };

    let (train_v, train_m) = make("train", 0, config.train_rows);
    let (val_v, val_m) = make("validation", config.train_rows, config.validation_rows);
    let mixed_start = config.train_rows + config.validation_rows;
    let (mut mixed_v, mixed_m) = make("mixed", mixed_start, config.mixed_rows);

    let plan = plan_segments(config, config.mixed_rows, &mut rng);
    let mut labels = vec![0u8; config.mixed_rows];
    let mut segments = Vec::with_capacity(plan.len());
    for (start, len) in plan {
        let mut channels: Vec<usize> = (0..config.continuous_channels).collect();
        // partial Fisher-Yates to pick the targeted channels
        for i in 0..config.targeted_channels {
            let j = rng.random_range(i..channels.len());
            channels.swap(i, j);
        }
        channels.truncate(config.targeted_channels);
        channels.sort_unstable();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        labels[start..start + len].fill(1);
        for r in start..start + len {
            match config.anomaly_style {
                AnomalyStyle::FeatureNoiseInjection => {
                    for &c in &channels {
                        let v = mixed_v.get(r, c) + config.anomaly_magnitude * gaussian(&mut rng);
                        mixed_v.set(r, c, v);
                    }
                }
                AnomalyStyle::AmplitudeShift => {
                    for &c in &channels {
                        let v = mixed_v.get(r, c) + sign * config.anomaly_magnitude;
                        mixed_v.set(r, c, v);
                    }
                }
                AnomalyStyle::StuckBinary => {
                    for j in 0..config.binary_channels {
                        let c = config.continuous_channels + j;
                        let stuck = mixed_v.get(start, c);
                        mixed_v.set(r, c, stuck);
                    }
                }
            }
        }
        segments.push(AnomalySegment {
            start,
            len,
            channels,
        });
    }

    let ds = |suffix: &str, v: Matrix, m: Vec<Option<usize>>, l: Option<Vec<u8>>| {
        TimeSeriesDataset::new(
            format!("{}_{suffix}", config.name),
            cols.clone(),
            v,
            l,
            Some(m),
            categories.clone(),
        )
    };
    let mut bundle = DatasetBundle::new(
        config.name.clone(),
        ds(
            "unsupervised_train",
            train_v,
            train_m,
            Some(vec![0; config.train_rows]),
        )?,
        ds(
            "validation",
            val_v,
            val_m,
            Some(vec![0; config.validation_rows]),
        )?,
        ds("mixed", mixed_v, mixed_m, Some(labels))?,
    )?;
    bundle.seed = Some(seed);
    Ok(SynthOutput { bundle, segments })
}
