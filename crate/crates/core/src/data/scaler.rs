use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::error::DataError;
use crate::nn::Matrix;

/// Per-feature min/max learned on the unsupervised training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Features whose training range is empty.
    pub fn zero_variance(&self) -> Vec<usize> {
        self.min
            .iter()
            .zip(&self.max)
            .enumerate()
            .filter(|(_, (lo, hi))| hi <= lo)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn fit_scaler(train: &TimeSeriesDataset) -> Result<ScalerParams, DataError> {
    if train.is_empty() {
        return Err(DataError::Invalid(
            "cannot fit a scaler on zero rows".into(),
        ));
    }
    let f = train.num_features();
    let mut min = vec![f64::INFINITY; f];
    let mut max = vec![f64::NEG_INFINITY; f];
    for r in 0..train.len() {
        for (c, &v) in train.values().row(r).iter().enumerate() {
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// `(v − min) / (max − min)`. Values outside the fit range are kept as they
/// are. Zero-variance features are only shifted by their minimum; the
/// pipeline drops them before scaling.
pub fn apply_scaler(
    params: &ScalerParams,
    ds: &TimeSeriesDataset,
) -> Result<TimeSeriesDataset, DataError> {
    if ds.is_scaled() {
        return Err(DataError::Usage(format!(
            "dataset `{}` is already scaled",
            ds.name
        )));
    }
    if params.min.len() != ds.num_features() {
        return Err(DataError::Invalid(format!(
            "scaler has {} features, dataset `{}` has {}",
            params.min.len(),
            ds.name,
            ds.num_features()
        )));
    }
    let mut values: Matrix = ds.values().clone();
    for r in 0..values.rows() {
        for (c, v) in values.row_mut(r).iter_mut().enumerate() {
            let (lo, hi) = (params.min[c], params.max[c]);
            *v = if hi > lo {
                (*v - lo) / (hi - lo)
            } else {
                *v - lo
            };
        }
    }
    Ok(ds.with_values(values, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn ds(vals: &[f64]) -> TimeSeriesDataset {
        let m = Matrix::from_vec(vals.len(), 1, vals.to_vec()).unwrap();
        TimeSeriesDataset::new("d", vec![Column::continuous("a")], m, None, None, vec![]).unwrap()
    }

    #[test]
    fn maps_into_unit_range_and_preserves_out_of_range() {
        let p = fit_scaler(&ds(&[2.0, 4.0, 3.0])).unwrap();
        let out = apply_scaler(&p, &ds(&[3.0, 5.0, 1.0])).unwrap();
        assert_eq!(out.values().data(), &[0.5, 1.5, -0.5]);
    }

    #[test]
    fn double_application_is_refused() {
        let d = ds(&[2.0, 4.0]);
        let p = fit_scaler(&d).unwrap();
        let once = apply_scaler(&p, &d).unwrap();
        assert!(matches!(apply_scaler(&p, &once), Err(DataError::Usage(_))));
    }

    #[test]
    fn flags_zero_variance() {
        let p = fit_scaler(&ds(&[1.0, 1.0])).unwrap();
        assert_eq!(p.zero_variance(), vec![0]);
    }
}
