use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::error::DataError;
use crate::nn::Tensor3;

/// Consecutive, non-overlapping windows of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// `[windows, window_size, features]`
    pub x: Tensor3,
    /// Per-window anomaly label; `None` where no label is known.
    pub labels: Vec<Option<bool>>,
    /// Per-window metadata category; `None` where unknown.
    pub metadata: Vec<Option<usize>>,
    /// Source row range `[start, end)` of every window.
    pub spans: Vec<RowSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSpan {
    pub start: usize,
    pub end: usize,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.x.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_size(&self) -> usize {
        self.x.time()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_batch(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            metadata: idx.iter().map(|&i| self.metadata[i]).collect(),
            spans: idx.iter().map(|&i| self.spans[i]).collect(),
        }
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: vec![None; self.len()],
            ..self.clone()
        }
    }

    /// Ground truth as 0/1, unlabeled windows counted as normal.
    pub fn truth(&self) -> Vec<u8> {
        self.labels
            .iter()
            .map(|l| u8::from(l == &Some(true)))
            .collect()
    }

    /// Windows of `self` followed by those of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self, DataError> {
        let (_, t, f) = self.x.shape();
        let (_, t2, f2) = other.x.shape();
        if (t, f) != (t2, f2) {
            return Err(DataError::Invalid(format!(
                "cannot concatenate windows of shape ({t}, {f}) and ({t2}, {f2})"
            )));
        }
        let mut data = self.x.data().to_vec();
        data.extend_from_slice(other.x.data());
        let x = Tensor3::from_vec(self.len() + other.len(), t, f, data)
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        let cat = |a: &[Option<bool>], b: &[Option<bool>]| [a, b].concat();
        Ok(Self {
            x,
            labels: cat(&self.labels, &other.labels),
            metadata: [self.metadata.as_slice(), other.metadata.as_slice()].concat(),
            spans: [self.spans.as_slice(), other.spans.as_slice()].concat(),
        })
    }
}

/// Cuts `ds` into `⌊N / T⌋` windows of `T` rows, dropping the remainder.
///
/// A window is anomalous if any of its rows is. Its metadata is the majority
/// category among rows that carry one, ties going to the category seen first.
pub fn windowize(ds: &TimeSeriesDataset, window_size: usize) -> Result<WindowBatch, DataError> {
    if window_size == 0 {
        return Err(DataError::Config("window size must be at least 1".into()));
    }
    if window_size > ds.len() {
        return Err(DataError::Invalid(format!(
            "window size {window_size} exceeds the {} rows of `{}`",
            ds.len(),
            ds.name
        )));
    }
    let n_windows = ds.len() / window_size;
    let f = ds.num_features();
    let used = n_windows * window_size;
    let data = ds.values().data()[..used * f].to_vec();
    let x = Tensor3::from_vec(n_windows, window_size, f, data)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let spans: Vec<RowSpan> = (0..n_windows)
        .map(|w| RowSpan {
            start: w * window_size,
            end: (w + 1) * window_size,
        })
        .collect();
    let labels = spans
        .iter()
        .map(|s| ds.anomaly_labels().map(|l| l[s.start..s.end].contains(&1)))
        .collect();
    let k = ds.metadata_categories().len();
    let metadata = spans
        .iter()
        .map(|s| {
            ds.metadata_labels()
                .and_then(|m| majority(&m[s.start..s.end], k))
        })
        .collect();
    Ok(WindowBatch {
        x,
        labels,
        metadata,
        spans,
    })
}

fn majority(rows: &[Option<usize>], k: usize) -> Option<usize> {
    let mut counts = vec![0usize; k];
    let mut first_seen = vec![usize::MAX; k];
    for (i, c) in rows.iter().enumerate() {
        if let Some(c) = *c {
            counts[c] += 1;
            first_seen[c] = first_seen[c].min(i);
        }
    }
    (0..k).filter(|&c| counts[c] > 0).max_by(|&a, &b| {
        counts[a]
            .cmp(&counts[b])
            .then(first_seen[b].cmp(&first_seen[a]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::nn::Matrix;

    fn ds(n: usize, labels: Vec<u8>, meta: Option<Vec<Option<usize>>>) -> TimeSeriesDataset {
        let m = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        TimeSeriesDataset::new(
            "w",
            vec![Column::continuous("a")],
            m,
            Some(labels),
            meta,
            vec!["production".into(), "equip".into(), "rest".into()],
        )
        .unwrap()
    }

    #[test]
    fn drops_remainder() {
        let w = windowize(&ds(10, vec![0; 10], None), 3).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.spans[2], RowSpan { start: 6, end: 9 });
    }

    #[test]
    fn any_anomalous_row_marks_window() {
        let mut l = vec![0; 8];
        l[5] = 1;
        let w = windowize(&ds(8, l, None), 8).unwrap();
        assert_eq!(w.labels, vec![Some(true)]);
    }

    #[test]
    fn unit_windows_pass_labels_through() {
        let l = vec![0, 1, 1, 0];
        let w = windowize(&ds(4, l.clone(), None), 1).unwrap();
        assert_eq!(w.truth(), l);
    }

    #[test]
    fn too_large_window_is_error() {
        assert!(windowize(&ds(4, vec![0; 4], None), 5).is_err());
    }

    #[test]
    fn metadata_majority_ties_to_first_seen() {
        let meta = vec![Some(2), Some(0), Some(0), Some(2), None, None];
        let w = windowize(&ds(6, vec![0; 6], Some(meta)), 6).unwrap();
        assert_eq!(w.metadata, vec![Some(2)]);
        let meta = vec![None, Some(1), Some(0), Some(0)];
        let w = windowize(&ds(4, vec![0; 4], Some(meta)), 4).unwrap();
        assert_eq!(w.metadata, vec![Some(0)]);
        let w = windowize(&ds(2, vec![0; 2], Some(vec![None, None])), 2).unwrap();
        assert_eq!(w.metadata, vec![None]);
    }
}
