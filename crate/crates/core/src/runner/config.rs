use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, CsvSchema, SynthConfig};
use crate::error::{Error, Result};
use crate::models::{LossWeights, VaeArchitecture, MAX_LSTM_LAYERS, MAX_TD_DENSE_LAYERS};

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;

/// Model families an experiment can train. `vae-sl` reports both the Max and
/// the Avg combination of one trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Pca,
    Isoforest,
    Dnn,
    VaeErr,
    VaeProb,
    VaeSl,
    VaeMd,
}

impl ModelName {
    pub const ALL: [ModelName; 7] = [
        ModelName::Pca,
        ModelName::Isoforest,
        ModelName::Dnn,
        ModelName::VaeErr,
        ModelName::VaeProb,
        ModelName::VaeSl,
        ModelName::VaeMd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Pca => "pca",
            ModelName::Isoforest => "isoforest",
            ModelName::Dnn => "dnn",
            ModelName::VaeErr => "vae-err",
            ModelName::VaeProb => "vae-prob",
            ModelName::VaeSl => "vae-sl",
            ModelName::VaeMd => "vae-md",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Row labels this model contributes to result tables.
    pub fn methods(self) -> &'static [&'static str] {
        match self {
            ModelName::Pca => &["PCA"],
            ModelName::Isoforest => &["IsoF"],
            ModelName::Dnn => &["DNN"],
            ModelName::VaeErr => &["VAE Err"],
            ModelName::VaeProb => &["VAE Prob"],
            ModelName::VaeSl => &["VAE SL Max", "VAE SL Avg"],
            ModelName::VaeMd => &["VAE MD"],
        }
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, ModelName::Pca | ModelName::Isoforest)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optional overrides of the default architecture for the dataset width.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureOverrides {
    pub td_dense_layers: Option<Vec<usize>>,
    pub lstm_layers: Option<Vec<usize>>,
    pub bottleneck_width: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
}

impl ArchitectureOverrides {
    pub fn apply(&self, input_width: usize, window_size: usize) -> VaeArchitecture {
        let mut a = VaeArchitecture::for_input(input_width, window_size);
        if let Some(v) = &self.td_dense_layers {
            a.td_dense_layers = v.clone();
        }
        if let Some(v) = &self.lstm_layers {
            a.lstm_layers = v.clone();
        }
        if let Some(v) = self.bottleneck_width {
            a.bottleneck_width = v;
        }
        if let Some(v) = self.batch_size {
            a.batch_size = v;
        }
        if let Some(v) = self.epochs {
            a.epochs = v;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// One of [`ModelName::ALL`].
    pub model: String,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub architecture: ArchitectureOverrides,
    /// PCA components; defaults to half the feature count.
    pub components: Option<usize>,
    /// Isolation Forest search tries.
    #[serde(default = "default_tries")]
    pub tries: usize,
}

fn default_tries() -> usize {
    100
}

impl ModelConfig {
    pub fn new(model: ModelName) -> Self {
        Self {
            model: model.as_str().into(),
            weights: LossWeights::default(),
            architecture: ArchitectureOverrides::default(),
            components: None,
            tries: default_tries(),
        }
    }

    /// The parsed model name. Only call on validated configs.
    pub fn name(&self) -> ModelName {
        ModelName::parse(&self.model).expect("validated model name")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        name: String,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        synth: SynthConfig,
    },
    /// Three CSV files sharing one schema. Relative paths are resolved
    /// against the config file's directory.
    Csv {
        name: String,
        schema: PathBuf,
        train: PathBuf,
        validation: PathBuf,
        mixed: PathBuf,
    },
}

impl DatasetConfig {
    pub fn name(&self) -> &str {
        match self {
            DatasetConfig::Synthetic { name, .. } | DatasetConfig::Csv { name, .. } => name,
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let DatasetConfig::Csv {
            schema,
            train,
            validation,
            mixed,
            ..
        } = self
        {
            for p in [schema, train, validation, mixed] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_window")]
    pub window_size: usize,
    /// Latent draws per window when scoring probabilistic models.
    #[serde(default = "default_samples")]
    pub scoring_samples: usize,
    #[serde(default)]
    pub check_unduplicated: bool,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_repeats() -> usize {
    50
}
fn default_window() -> usize {
    10
}
fn default_samples() -> usize {
    crate::models::DEFAULT_SCORING_SAMPLES
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every cross-field constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.schema_version != EXPERIMENT_SCHEMA_VERSION {
            errs.push(format!(
                "schema_version: expected {EXPERIMENT_SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.repeats == 0 {
            errs.push("repeats: must be at least 1".into());
        }
        if self.window_size == 0 {
            errs.push("window_size: must be at least 1".into());
        }
        if self.scoring_samples == 0 {
            errs.push("scoring_samples: must be at least 1".into());
        }
        if self.datasets.is_empty() {
            errs.push("datasets: at least one dataset is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            if !names.insert(d.name()) {
                errs.push(format!("datasets[{i}].name: duplicate name `{}`", d.name()));
            }
            self.validate_dataset(i, d, &mut errs);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            match ModelName::parse(&m.model) {
                None => errs.push(format!(
                    "models[{i}].model: unknown model `{}`; allowed values: {}",
                    m.model,
                    ModelName::ALL.map(|n| n.as_str()).join(", ")
                )),
                Some(n) => {
                    if !seen.insert(n) {
                        errs.push(format!("models[{i}].model: `{n}` listed twice"));
                    }
                    if n == ModelName::Isoforest && m.tries == 0 {
                        errs.push(format!("models[{i}].tries: must be at least 1"));
                    }
                    if m.components == Some(0) {
                        errs.push(format!("models[{i}].components: must be at least 1"));
                    }
                }
            }
            if let Err(e) = m.weights.validate() {
                errs.push(format!("models[{i}].weights: {e}"));
            }
            let a = &m.architecture;
            for (field, layers, max) in [
                ("td_dense_layers", &a.td_dense_layers, MAX_TD_DENSE_LAYERS),
                ("lstm_layers", &a.lstm_layers, MAX_LSTM_LAYERS),
            ] {
                if let Some(l) = layers {
                    if l.len() > max {
                        errs.push(format!(
                            "models[{i}].architecture.{field}: at most {max} layers, got {}",
                            l.len()
                        ));
                    }
                    if l.contains(&0) {
                        errs.push(format!(
                            "models[{i}].architecture.{field}: widths must be positive"
                        ));
                    }
                }
            }
            for (field, v) in [
                ("bottleneck_width", a.bottleneck_width),
                ("batch_size", a.batch_size),
            ] {
                if v == Some(0) {
                    errs.push(format!(
                        "models[{i}].architecture.{field}: must be positive"
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn validate_dataset(&self, i: usize, d: &DatasetConfig, errs: &mut Vec<String>) {
        let t = self.window_size;
        match d {
            DatasetConfig::Synthetic { synth, .. } => {
                if let Err(e) = synth.validate() {
                    errs.push(format!("datasets[{i}].synth: {e}"));
                }
                let shortest = synth
                    .train_rows
                    .min(synth.validation_rows)
                    .min(synth.mixed_rows / 2);
                if t > shortest {
                    errs.push(format!(
                        "window_size: {t} exceeds the {shortest} rows of the shortest split of datasets[{i}]"
                    ));
                }
            }
            DatasetConfig::Csv {
                schema,
                train,
                validation,
                mixed,
                ..
            } => {
                let mut missing = false;
                for (field, p) in [
                    ("schema", schema),
                    ("train", train),
                    ("validation", validation),
                    ("mixed", mixed),
                ] {
                    if !p.exists() {
                        errs.push(format!(
                            "datasets[{i}].{field}: `{}` does not exist",
                            p.display()
                        ));
                        missing = true;
                    }
                }
                if missing {
                    return;
                }
                let schema = match CsvSchema::load(schema) {
                    Ok(s) => s,
                    Err(e) => {
                        errs.push(format!("datasets[{i}].schema: {e}"));
                        return;
                    }
                };
                for (field, p, halve) in [
                    ("train", train, false),
                    ("validation", validation, false),
                    ("mixed", mixed, true),
                ] {
                    match load_csv(p, &schema) {
                        Ok(ds) => {
                            let rows = if halve { ds.len() / 2 } else { ds.len() };
                            if t > rows {
                                errs.push(format!(
                                    "window_size: {t} exceeds the {rows} usable rows of datasets[{i}].{field}"
                                ));
                            }
                        }
                        Err(e) => errs.push(format!("datasets[{i}].{field}: {e}")),
                    }
                }
            }
        }
    }
}

/// Reads, resolves and validates an experiment config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for d in &mut cfg.datasets {
        d.resolve(base);
    }
    cfg.validate()?;
    Ok(cfg)
}
