//! The fixed preprocessing order: ingest → drop zero-variance features →
//! fit/apply the scaler → even/odd split → windowize.

use serde::{Deserialize, Serialize};

use super::scaler::{apply_scaler, fit_scaler, ScalerParams};
use super::split::{even_odd_split_duplicate, split_rows};
use super::window::{windowize, WindowBatch};
use super::TimeSeriesDataset;
use crate::error::DataError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingested,
    Filtered,
    Scaled,
}

/// Raw inputs: anomaly-free training and validation series plus a labeled
/// mixed series, moved through the pipeline stage by stage.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub unsupervised_train: TimeSeriesDataset,
    pub validation: TimeSeriesDataset,
    pub mixed: TimeSeriesDataset,
    pub seed: Option<u64>,
    stage: Stage,
    dropped_features: Vec<String>,
    scaler: Option<ScalerParams>,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        unsupervised_train: TimeSeriesDataset,
        validation: TimeSeriesDataset,
        mixed: TimeSeriesDataset,
    ) -> Result<Self, DataError> {
        for ds in [&unsupervised_train, &validation] {
            if ds.anomaly_count() > 0 {
                return Err(DataError::Invalid(format!(
                    "`{}` must be anomaly-free but has {} anomalous rows",
                    ds.name,
                    ds.anomaly_count()
                )));
            }
        }
        if mixed.anomaly_labels().is_none() {
            return Err(DataError::Invalid(format!(
                "mixed series `{}` needs anomaly labels",
                mixed.name
            )));
        }
        if validation.columns() != unsupervised_train.columns()
            || mixed.columns() != unsupervised_train.columns()
        {
            return Err(DataError::Invalid(
                "all series must share the same columns".into(),
            ));
        }
        if [&unsupervised_train, &validation, &mixed]
            .iter()
            .any(|d| d.is_scaled())
        {
            return Err(DataError::Usage("bundle inputs must be unscaled".into()));
        }
        Ok(Self {
            name: name.into(),
            unsupervised_train,
            validation,
            mixed,
            seed: None,
            stage: Stage::Ingested,
            dropped_features: Vec::new(),
            scaler: None,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    fn expect(&self, stage: Stage, op: &str) -> Result<(), DataError> {
        if self.stage != stage {
            return Err(DataError::Usage(format!(
                "`{op}` requires stage {stage:?}, bundle is at {:?}",
                self.stage
            )));
        }
        Ok(())
    }

    /// Removes features that are constant on the unsupervised training set
    /// from every series.
    pub fn drop_zero_variance(mut self) -> Result<Self, DataError> {
        self.expect(Stage::Ingested, "drop_zero_variance")?;
        let drop = fit_scaler(&self.unsupervised_train)?.zero_variance();
        if drop.len() == self.unsupervised_train.num_features() {
            return Err(DataError::Invalid(format!(
                "every feature of `{}` has zero variance",
                self.name
            )));
        }
        self.dropped_features = drop
            .iter()
            .map(|&c| self.unsupervised_train.columns()[c].name.clone())
            .collect();
        self.unsupervised_train = self.unsupervised_train.drop_columns(&drop);
        self.validation = self.validation.drop_columns(&drop);
        self.mixed = self.mixed.drop_columns(&drop);
        self.stage = Stage::Filtered;
        Ok(self)
    }

    /// Fits min/max on the unsupervised training set and applies it to all
    /// series.
    pub fn scale(mut self) -> Result<Self, DataError> {
        self.expect(Stage::Filtered, "scale")?;
        let params = fit_scaler(&self.unsupervised_train)?;
        self.unsupervised_train = apply_scaler(&params, &self.unsupervised_train)?;
        self.validation = apply_scaler(&params, &self.validation)?;
        self.mixed = apply_scaler(&params, &self.mixed)?;
        self.scaler = Some(params);
        self.stage = Stage::Scaled;
        Ok(self)
    }

    /// Splits the scaled mixed series into supervised-train and test halves.
    pub fn split(self) -> Result<SplitBundle, DataError> {
        self.expect(Stage::Scaled, "split")?;
        let (supervised_train, test) = even_odd_split_duplicate(&self.mixed)?;
        let rows = split_rows(self.mixed.len());
        let scaler = self.scaler.expect("set by scale()");
        let manifest = SplitManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            dataset: self.name.clone(),
            seed: self.seed,
            features: self
                .unsupervised_train
                .columns()
                .iter()
                .map(|c| c.name.clone())
                .collect(),
            dropped_features: self.dropped_features,
            scaler,
            sizes: SplitSizes {
                unsupervised_train: self.unsupervised_train.len(),
                validation: self.validation.len(),
                supervised_train: supervised_train.len(),
                test: test.len(),
                mixed: self.mixed.len(),
                mixed_anomalous: self.mixed.anomaly_count(),
            },
            test_rows: rows.test,
            supervised_train_rows: rows.supervised_train,
        };
        Ok(SplitBundle {
            unsupervised_train: self.unsupervised_train,
            validation: self.validation,
            supervised_train,
            test,
            mixed: self.mixed,
            manifest,
        })
    }

    /// Runs every remaining stage.
    pub fn prepare(self) -> Result<SplitBundle, DataError> {
        self.drop_zero_variance()?.scale()?.split()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub unsupervised_train: usize,
    pub validation: usize,
    pub supervised_train: usize,
    pub test: usize,
    pub mixed: usize,
    pub mixed_anomalous: usize,
}

/// Everything needed to reproduce a split exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub schema_version: u32,
    pub dataset: String,
    pub seed: Option<u64>,
    pub features: Vec<String>,
    pub dropped_features: Vec<String>,
    pub scaler: ScalerParams,
    pub sizes: SplitSizes,
    /// Source row in the mixed series of each test row.
    pub test_rows: Vec<usize>,
    /// Source row in the mixed series of each supervised-training row.
    pub supervised_train_rows: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    UnsupervisedTrain,
    Validation,
    SupervisedTrain,
    Test,
    /// The scaled mixed series before splitting and duplication.
    Mixed,
}

/// Scaled, split series ready for windowing.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub unsupervised_train: TimeSeriesDataset,
    pub validation: TimeSeriesDataset,
    pub supervised_train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub mixed: TimeSeriesDataset,
    pub manifest: SplitManifest,
}

impl SplitBundle {
    pub fn get(&self, which: SplitKind) -> &TimeSeriesDataset {
        match which {
            SplitKind::UnsupervisedTrain => &self.unsupervised_train,
            SplitKind::Validation => &self.validation,
            SplitKind::SupervisedTrain => &self.supervised_train,
            SplitKind::Test => &self.test,
            SplitKind::Mixed => &self.mixed,
        }
    }

    pub fn windows(&self, which: SplitKind, window_size: usize) -> Result<WindowBatch, DataError> {
        windowize(self.get(which), window_size)
    }

    pub fn num_features(&self) -> usize {
        self.unsupervised_train.num_features()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::nn::Matrix;

    fn series(name: &str, rows: &[[f64; 3]], labels: Option<Vec<u8>>) -> TimeSeriesDataset {
        let m = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let cols = vec![
            Column::continuous("a"),
            Column::continuous("constant"),
            Column::continuous("b"),
        ];
        TimeSeriesDataset::new(name, cols, m, labels, None, vec![]).unwrap()
    }

    fn bundle() -> DatasetBundle {
        let train = series(
            "train",
            &[[0.0, 5.0, 1.0], [2.0, 5.0, 3.0], [1.0, 5.0, 2.0]],
            None,
        );
        let val = series("val", &[[1.0, 5.0, 1.0]], None);
        let mixed = series(
            "mixed",
            &[
                [1.0, 5.0, 1.0],
                [4.0, 6.0, 1.0],
                [1.0, 7.0, 2.0],
                [0.0, 5.0, 2.0],
            ],
            Some(vec![0, 1, 0, 0]),
        );
        DatasetBundle::new("b", train, val, mixed).unwrap()
    }

    #[test]
    fn constant_training_column_is_dropped_everywhere() {
        let s = bundle().prepare().unwrap();
        assert_eq!(s.manifest.dropped_features, vec!["constant".to_string()]);
        for k in [
            SplitKind::UnsupervisedTrain,
            SplitKind::Validation,
            SplitKind::SupervisedTrain,
            SplitKind::Test,
        ] {
            assert_eq!(s.get(k).num_features(), 2);
        }
        assert_eq!(s.test.values().row(0), &[0.5, 0.0]);
        assert_eq!(s.supervised_train.values().row(0), &[2.0, 0.0]);
    }

    #[test]
    fn no_constant_columns_leaves_features() {
        let train = series("t", &[[0.0, 1.0, 1.0], [1.0, 2.0, 3.0]], None);
        let b = DatasetBundle::new(
            "b",
            train.clone(),
            train.clone(),
            train.select_rows(&[0, 1]).without_labels(),
        );
        assert!(b.is_err());
        let mixed = TimeSeriesDataset::new(
            "m",
            train.columns().to_vec(),
            train.values().clone(),
            Some(vec![0, 1]),
            None,
            vec![],
        )
        .unwrap();
        let b = DatasetBundle::new("b", train.clone(), train, mixed)
            .unwrap()
            .drop_zero_variance()
            .unwrap();
        assert_eq!(b.unsupervised_train.num_features(), 3);
    }

    #[test]
    fn out_of_order_is_usage_error() {
        assert!(matches!(bundle().scale(), Err(DataError::Usage(_))));
        assert!(matches!(bundle().split(), Err(DataError::Usage(_))));
        let f = bundle().drop_zero_variance().unwrap();
        assert!(matches!(
            f.clone().drop_zero_variance(),
            Err(DataError::Usage(_))
        ));
        assert!(matches!(f.split(), Err(DataError::Usage(_))));
    }

    #[test]
    fn all_zero_variance_is_error() {
        let rows = [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let train = series("t", &rows, None);
        let mixed = series("m", &rows, Some(vec![0, 1]));
        let b = DatasetBundle::new("b", train.clone(), train, mixed).unwrap();
        assert!(matches!(b.drop_zero_variance(), Err(DataError::Invalid(_))));
    }

    #[test]
    fn anomalous_training_rows_rejected() {
        let train = series("t", &[[0.0, 1.0, 2.0]], Some(vec![1]));
        let mixed = series("m", &[[0.0, 1.0, 2.0]], Some(vec![1]));
        assert!(DatasetBundle::new("b", train.clone(), train, mixed).is_err());
    }
}
