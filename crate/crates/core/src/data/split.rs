use super::TimeSeriesDataset;
use crate::error::DataError;

/// Row mapping produced by [`even_odd_split_duplicate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRows {
    pub test: Vec<usize>,
    pub supervised_train: Vec<usize>,
}

/// Source-row indices: even rows (0-based) go to test, odd rows to supervised
/// training, each duplicated in place.
pub fn split_rows(n: usize) -> SplitRows {
    let dup =
        |parity: usize| -> Vec<usize> { (parity..n).step_by(2).flat_map(|i| [i, i]).collect() };
    SplitRows {
        test: dup(0),
        supervised_train: dup(1),
    }
}

/// Splits a labeled mixed series into `(supervised_train, test)`.
///
/// Even rows form the test series and odd rows the supervised-training
/// series; every selected row is then repeated once, so both halves keep the
/// original length at half the temporal resolution.
pub fn even_odd_split_duplicate(
    mixed: &TimeSeriesDataset,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset), DataError> {
    if mixed.anomaly_labels().is_none() {
        return Err(DataError::Usage(format!(
            "even/odd split needs anomaly labels; `{}` has none",
            mixed.name
        )));
    }
    let rows = split_rows(mixed.len());
    Ok((
        mixed.select_rows(&rows.supervised_train),
        mixed.select_rows(&rows.test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::nn::Matrix;

    fn mixed(labels: Vec<u8>) -> TimeSeriesDataset {
        let n = labels.len();
        let m = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        TimeSeriesDataset::new(
            "m",
            vec![Column::continuous("r")],
            m,
            Some(labels),
            None,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn four_rows_example() {
        let (sup, test) = even_odd_split_duplicate(&mixed(vec![0, 1, 0, 1])).unwrap();
        assert_eq!(test.values().data(), &[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(sup.values().data(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(test.anomaly_labels().unwrap(), &[0, 0, 0, 0]);
        assert_eq!(sup.anomaly_labels().unwrap(), &[1, 1, 1, 1]);
    }

    #[test]
    fn unlabeled_is_usage_error() {
        let ds = mixed(vec![0, 0]).without_labels();
        assert!(matches!(
            even_odd_split_duplicate(&ds),
            Err(DataError::Usage(_))
        ));
    }

    #[test]
    fn deterministic() {
        let ds = mixed(vec![0, 1, 1, 0, 1, 0]);
        assert_eq!(
            even_odd_split_duplicate(&ds).unwrap(),
            even_odd_split_duplicate(&ds).unwrap()
        );
    }
}
