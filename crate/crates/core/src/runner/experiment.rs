use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig, ModelConfig, ModelName};
use crate::baselines::{isoforest_random_search, isoforest_score, pca_fit, pca_reconstruct};
use crate::data::{
    load_csv, synth_generate, CsvSchema, DatasetBundle, SplitBundle, SplitKind, SplitManifest,
    TimeSeriesDataset, WindowBatch,
};
use crate::error::{Error, Result};
use crate::eval::{
    barycentric_measure, friedman_test, single_point_report, student_ttest, sweep_combined,
    sweep_percentiles, truncate2, two_sample_ttest, Combination, CombineInputs, MetricsReport,
    TestResult,
};
use crate::models::{train, Dnn, TrainConfig, Vae, VaeKind, WindowScores};
use crate::nn::Matrix;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub report: MetricsReport,
    /// Same model scored on the mixed series before splitting.
    pub unduplicated: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub model: ModelName,
    pub repeats: Vec<RepeatResult>,
    pub best_repeat: Option<usize>,
    /// First error of a failed run; such methods carry no repeats.
    pub error: Option<String>,
}

impl MethodResult {
    pub fn best(&self) -> Option<&RepeatResult> {
        self.best_repeat.map(|i| &self.repeats[i])
    }

    pub fn best_f1(&self) -> Option<f64> {
        self.best().map(|r| r.report.best_f1())
    }

    pub fn best_auc(&self) -> Option<f64> {
        self.best().map(|r| r.report.auc_or_zero())
    }

    /// Best-operating-point f1 of every repeat.
    pub fn f1_per_repeat(&self) -> Vec<f64> {
        self.repeats.iter().map(|r| r.report.best_f1()).collect()
    }
}

/// Index of the best report: highest two-decimal f1, then highest AUC, then
/// the earliest.
pub fn select_best<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, r) in reports.into_iter().enumerate() {
        let key = (truncate2(r.best_f1()), r.auc_or_zero());
        match best {
            Some((_, f, a)) if key.0 < f || (key.0 == f && key.1 <= a) => {}
            _ => best = Some((i, key.0, key.1)),
        }
    }
    best.map(|b| b.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub method: String,
    pub versus: String,
    pub welch: Option<TestResult>,
    pub student: Option<TestResult>,
    pub note: Option<String>,
}

fn pair_test(method: &str, versus: &str, a: &[f64], b: &[f64]) -> PairTest {
    let welch = two_sample_ttest(a, b);
    let student = student_ttest(a, b);
    PairTest {
        method: method.into(),
        versus: versus.into(),
        note: welch.as_ref().err().map(|e| e.to_string()),
        welch: welch.ok(),
        student: student.ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub name: String,
    pub manifest: SplitManifest,
    pub methods: Vec<MethodResult>,
    pub best_method: Option<String>,
    /// Per-repeat f1 of every method against the best method.
    pub ttests: Vec<PairTest>,
}

/// Tests over the best results of each method across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDatasetStats {
    pub metric: String,
    pub methods: Vec<String>,
    /// Methods as treatments, datasets as blocks.
    pub friedman: Option<TestResult>,
    pub reference: Option<String>,
    pub ttests: Vec<PairTest>,
    pub note: Option<String>,
}

/// Best f1 and AUC of every method on every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `[method][dataset]`, `None` for failed runs.
    pub f1: Vec<Vec<Option<f64>>>,
    pub auc: Vec<Vec<Option<f64>>>,
}

impl ResultTable {
    /// Methods sharing the highest two-decimal value on dataset `d`.
    pub fn best_methods(&self, values: &[Vec<Option<f64>>], d: usize) -> Vec<usize> {
        let cut: Vec<Option<f64>> = values.iter().map(|row| row[d].map(truncate2)).collect();
        let Some(max) = cut.iter().flatten().copied().reduce(f64::max) else {
            return Vec::new();
        };
        (0..cut.len()).filter(|&m| cut[m] == Some(max)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub crate_version: String,
    pub base_seed: u64,
    pub repeats: usize,
    pub window_size: usize,
    /// Seed of every repeat.
    pub seeds: Vec<u64>,
    pub datasets: Vec<DatasetResult>,
    pub table: ResultTable,
    pub cross_dataset: Vec<CrossDatasetStats>,
}

/// Windows and row matrices of one prepared dataset.
struct Prepared {
    split: SplitBundle,
    column_kinds: Vec<crate::data::ColumnKind>,
    metadata_classes: usize,
    unsupervised: WindowBatch,
    validation: WindowBatch,
    supervised: WindowBatch,
    test: WindowBatch,
    mixed: WindowBatch,
}

impl Prepared {
    fn new(split: SplitBundle, t: usize) -> Result<Self> {
        Ok(Self {
            column_kinds: split.unsupervised_train.column_kinds(),
            metadata_classes: split.unsupervised_train.metadata_categories().len(),
            unsupervised: split.windows(SplitKind::UnsupervisedTrain, t)?,
            validation: split.windows(SplitKind::Validation, t)?,
            supervised: split.windows(SplitKind::SupervisedTrain, t)?,
            test: split.windows(SplitKind::Test, t)?,
            mixed: split.windows(SplitKind::Mixed, t)?,
            split,
        })
    }

    fn features(&self) -> usize {
        self.split.num_features()
    }
}

fn row_truth(ds: &TimeSeriesDataset) -> Vec<u8> {
    ds.anomaly_labels()
        .map(<[u8]>::to_vec)
        .unwrap_or_else(|| vec![0; ds.len()])
}

/// Builds the raw bundle a dataset config describes.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<DatasetBundle> {
    match cfg {
        DatasetConfig::Synthetic { name, seed, synth } => {
            let mut synth = synth.clone();
            synth.name = name.clone();
            Ok(synth_generate(&synth, *seed)?.bundle)
        }
        DatasetConfig::Csv {
            name,
            schema,
            train,
            validation,
            mixed,
        } => {
            let schema = CsvSchema::load(schema)?;
            Ok(DatasetBundle::new(
                name.clone(),
                load_csv(train, &schema)?,
                load_csv(validation, &schema)?,
                load_csv(mixed, &schema)?,
            )?)
        }
    }
}

/// Per-method reports of one repeat, in [`ModelName::methods`] order.
struct ModelRun {
    reports: Vec<MetricsReport>,
    unduplicated: Vec<Option<MetricsReport>>,
}

fn vae_kind(m: ModelName) -> VaeKind {
    match m {
        ModelName::VaeErr => VaeKind::Err,
        ModelName::VaeProb => VaeKind::Prob,
        ModelName::VaeSl => VaeKind::SparseLabels,
        _ => VaeKind::Metadata,
    }
}

fn vae_reports(
    model: ModelName,
    test: &WindowScores,
    truth: &[u8],
    validation: &WindowScores,
) -> Result<Vec<MetricsReport>> {
    let val = &validation.deviation;
    let pi = || {
        test.pi_anomalous
            .as_deref()
            .ok_or_else(|| Error::Output("label head output missing".into()))
    };
    Ok(match model {
        ModelName::VaeErr | ModelName::VaeProb => {
            vec![sweep_percentiles(&test.deviation, truth, val)?]
        }
        ModelName::VaeSl => {
            let inputs = CombineInputs {
                deviation: &test.deviation,
                pi_anomalous: pi()?,
                metadata_measure: None,
            };
            vec![
                sweep_combined(inputs, truth, val, Combination::Max)?,
                sweep_combined(inputs, truth, val, Combination::Avg)?,
            ]
        }
        _ => {
            let probs = test
                .metadata
                .as_ref()
                .ok_or_else(|| Error::Output("metadata head output missing".into()))?;
            let measure = probs
                .iter()
                .map(|p| barycentric_measure(p).map(|b| b.measure))
                .collect::<Result<Vec<f64>, _>>()?;
            let inputs = CombineInputs {
                deviation: &test.deviation,
                pi_anomalous: pi()?,
                metadata_measure: Some(&measure),
            };
            vec![sweep_combined(inputs, truth, val, Combination::Avg)?]
        }
    })
}

fn run_model(
    mc: &ModelConfig,
    data: &Prepared,
    exp: &ExperimentConfig,
    seed: u64,
) -> Result<ModelRun> {
    let name = mc.name();
    let f = data.features();
    let t = exp.window_size;
    let check = exp.check_unduplicated;
    let test_truth = data.test.truth();
    let mixed_truth = data.mixed.truth();
    match name {
        ModelName::Pca => {
            let k = mc.components.unwrap_or((f / 2).max(1));
            let model = pca_fit(data.split.unsupervised_train.values(), k)?;
            let (_, val) = pca_reconstruct(&model, data.split.validation.values())?;
            let score = |ds: &TimeSeriesDataset| -> Result<MetricsReport> {
                let (_, dev) = pca_reconstruct(&model, ds.values())?;
                Ok(sweep_percentiles(&dev, &row_truth(ds), &val)?)
            };
            Ok(ModelRun {
                reports: vec![score(&data.split.test)?],
                unduplicated: vec![check.then(|| score(&data.split.mixed)).transpose()?],
            })
        }
        ModelName::Isoforest => {
            let test = &data.split.test;
            let search = isoforest_random_search(
                data.split.unsupervised_train.values(),
                test.values(),
                &row_truth(test),
                mc.tries,
                seed,
            )?;
            let score = |x: &Matrix, truth: &[u8]| -> Result<MetricsReport> {
                let s = isoforest_score(&search.model, x);
                let d: Vec<bool> = s.iter().map(|&v| v > search.model.threshold).collect();
                Ok(single_point_report(&d, Some(&s), truth)?)
            };
            let mixed = &data.split.mixed;
            Ok(ModelRun {
                reports: vec![score(test.values(), &row_truth(test))?],
                unduplicated: vec![check
                    .then(|| score(mixed.values(), &row_truth(mixed)))
                    .transpose()?],
            })
        }
        ModelName::Dnn => {
            let arch = mc.architecture.apply(f, t);
            let cfg = TrainConfig::new(arch.epochs, arch.batch_size, seed);
            let mut dnn = Dnn::new(arch, seed)?;
            train(&mut dnn, &data.supervised, &data.validation, &cfg)?;
            let score = |w: &WindowBatch, truth: &[u8]| -> Result<MetricsReport> {
                let p = dnn.predict(&w.x)?;
                let d: Vec<bool> = p.iter().map(|&v| v > 0.5).collect();
                Ok(single_point_report(&d, Some(&p), truth)?)
            };
            Ok(ModelRun {
                reports: vec![score(&data.test, &test_truth)?],
                unduplicated: vec![check
                    .then(|| score(&data.mixed, &mixed_truth))
                    .transpose()?],
            })
        }
        _ => {
            let kind = vae_kind(name);
            let arch = mc.architecture.apply(f, t);
            let cfg = TrainConfig::new(arch.epochs, arch.batch_size, seed);
            let mut vae = Vae::new(
                kind,
                arch,
                &data.column_kinds,
                data.metadata_classes,
                mc.weights,
                seed,
            )?;
            let train_set = if kind.has_label_head() {
                data.unsupervised
                    .without_labels()
                    .concat(&data.supervised)?
            } else {
                data.unsupervised.clone()
            };
            train(
                &mut vae,
                &train_set,
                &data.validation.without_labels(),
                &cfg,
            )?;
            let samples = exp.scoring_samples;
            let val = vae.score(&data.validation.x, samples, seed)?;
            let test = vae.score(&data.test.x, samples, seed)?;
            let reports = vae_reports(name, &test, &test_truth, &val)?;
            let unduplicated = if check {
                let mixed = vae.score(&data.mixed.x, samples, seed)?;
                vae_reports(name, &mixed, &mixed_truth, &val)?
                    .into_iter()
                    .map(Some)
                    .collect()
            } else {
                vec![None; reports.len()]
            };
            Ok(ModelRun {
                reports,
                unduplicated,
            })
        }
    }
}

/// Seed of repeat `i`.
pub fn repeat_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// Runs every configured model on every dataset for every repeat.
///
/// Repeats and models run in parallel; the result depends only on the config.
/// A model whose run fails in any repeat is reported with its error while the
/// others continue.
pub fn run_experiment(exp: &ExperimentConfig) -> Result<RunReport> {
    exp.validate()?;
    let t = exp.window_size;
    let prepared = exp
        .datasets
        .iter()
        .map(|d| Prepared::new(load_dataset(d)?.prepare()?, t))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..exp.repeats)
        .map(|i| repeat_seed(exp.base_seed, i))
        .collect();

    let jobs: Vec<(usize, usize, usize)> = (0..prepared.len())
        .flat_map(|d| {
            (0..exp.models.len()).flat_map(move |m| (0..exp.repeats).map(move |r| (d, m, r)))
        })
        .collect();
    let runs: Vec<Result<ModelRun>> = jobs
        .par_iter()
        .map(|&(d, m, r)| run_model(&exp.models[m], &prepared[d], exp, seeds[r]))
        .collect();

    let mut runs = runs.into_iter();
    let mut datasets = Vec::with_capacity(prepared.len());
    for (d, data) in prepared.iter().enumerate() {
        let mut methods = Vec::new();
        for mc in &exp.models {
            let name = mc.name();
            let labels = name.methods();
            let mut per_method: Vec<Vec<RepeatResult>> = vec![Vec::new(); labels.len()];
            let mut error = None;
            for (r, &seed) in seeds.iter().enumerate() {
                match runs.next().expect("one run per job") {
                    Ok(run) => {
                        for (i, (rep, und)) in
                            run.reports.into_iter().zip(run.unduplicated).enumerate()
                        {
                            per_method[i].push(RepeatResult {
                                repeat: r,
                                seed,
                                report: rep,
                                unduplicated: und,
                            });
                        }
                    }
                    Err(e) => {
                        error.get_or_insert(format!("repeat {r} (seed {seed}): {e}"));
                    }
                }
            }
            for (label, repeats) in labels.iter().zip(per_method) {
                let (repeats, best_repeat) = if error.is_some() {
                    (Vec::new(), None)
                } else {
                    let best = select_best(repeats.iter().map(|r| &r.report));
                    (repeats, best)
                };
                methods.push(MethodResult {
                    method: label.to_string(),
                    model: name,
                    repeats,
                    best_repeat,
                    error: error.clone(),
                });
            }
        }
        let best_method = {
            let ok: Vec<&MethodResult> = methods.iter().filter(|m| m.best().is_some()).collect();
            select_best(ok.iter().map(|m| &m.best().expect("filtered").report))
                .map(|i| ok[i].method.clone())
        };
        let ttests = match &best_method {
            Some(b) => {
                let reference = methods
                    .iter()
                    .find(|m| &m.method == b)
                    .expect("best exists");
                methods
                    .iter()
                    .filter(|m| &m.method != b && m.error.is_none())
                    .map(|m| {
                        pair_test(&m.method, b, &m.f1_per_repeat(), &reference.f1_per_repeat())
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        datasets.push(DatasetResult {
            name: exp.datasets[d].name().to_string(),
            manifest: data.split.manifest.clone(),
            methods,
            best_method,
            ttests,
        });
    }

    let table = build_table(&datasets);
    let cross_dataset = if datasets.len() >= 2 {
        vec![
            cross_stats("f1", &table, &table.f1),
            cross_stats("auc", &table, &table.auc),
        ]
    } else {
        Vec::new()
    };
    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: exp.name.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        base_seed: exp.base_seed,
        repeats: exp.repeats,
        window_size: exp.window_size,
        seeds,
        datasets,
        table,
        cross_dataset,
    })
}

fn build_table(datasets: &[DatasetResult]) -> ResultTable {
    let methods: Vec<String> = datasets
        .first()
        .map(|d| d.methods.iter().map(|m| m.method.clone()).collect())
        .unwrap_or_default();
    let column = |get: fn(&MethodResult) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        (0..methods.len())
            .map(|m| datasets.iter().map(|d| get(&d.methods[m])).collect())
            .collect()
    };
    ResultTable {
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        f1: column(MethodResult::best_f1),
        auc: column(MethodResult::best_auc),
        methods,
    }
}

/// Friedman test over methods with results on every dataset, and t-tests of
/// each against the method with the highest mean.
fn cross_stats(
    metric: &str,
    table: &ResultTable,
    values: &[Vec<Option<f64>>],
) -> CrossDatasetStats {
    let complete: Vec<(usize, Vec<f64>)> = values
        .iter()
        .enumerate()
        .filter_map(|(m, row)| {
            row.iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|v| (m, v))
        })
        .collect();
    let methods: Vec<String> = complete
        .iter()
        .map(|(m, _)| table.methods[*m].clone())
        .collect();
    let rows: Vec<Vec<f64>> = complete.iter().map(|(_, v)| v.clone()).collect();
    let (friedman, note) = match friedman_test(&rows) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let reference = rows
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, v)| match best {
            Some((_, m)) if mean(v) <= m => best,
            _ => Some((i, mean(v))),
        })
        .map(|(i, _)| i);
    let ttests = reference
        .map(|r| {
            (0..rows.len())
                .filter(|&i| i != r)
                .map(|i| pair_test(&methods[i], &methods[r], &rows[i], &rows[r]))
                .collect()
        })
        .unwrap_or_default();
    CrossDatasetStats {
        metric: metric.into(),
        reference: reference.map(|r| methods[r].clone()),
        methods,
        friedman,
        ttests,
        note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Confusion, OperatingPoint};

    fn report(f1_tp: usize, auc: f64) -> MetricsReport {
        let c = Confusion {
            tp: f1_tp,
            fp: 10 - f1_tp,
            tn: 10,
            fn_: 10 - f1_tp,
        };
        MetricsReport::from_points(vec![OperatingPoint::new(None, None, c)], &[0, 1], Some(auc))
            .unwrap()
    }

    #[test]
    fn best_by_f1_then_auc_then_first() {
        let rs = [
            report(5, 0.7),
            report(8, 0.6),
            report(8, 0.9),
            report(8, 0.9),
        ];
        assert_eq!(select_best(&rs), Some(2));
        assert_eq!(select_best(&[]), None);
    }
}
