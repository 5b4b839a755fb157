use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Binary,
        }
    }
}

/// A multivariate series: `N` rows by `F` typed feature columns, with
/// optional per-row anomaly labels and sparse categorical metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    columns: Vec<Column>,
    values: Matrix,
    anomaly_labels: Option<Vec<u8>>,
    metadata_labels: Option<Vec<Option<usize>>>,
    metadata_categories: Vec<String>,
    scaled: bool,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        values: Matrix,
        anomaly_labels: Option<Vec<u8>>,
        metadata_labels: Option<Vec<Option<usize>>>,
        metadata_categories: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = values.rows();
        if values.cols() != columns.len() {
            return Err(DataError::Invalid(format!(
                "{} value columns but {} declared columns",
                values.cols(),
                columns.len()
            )));
        }
        for (c, col) in columns.iter().enumerate() {
            for r in 0..n {
                let v = values.get(r, c);
                if !v.is_finite() {
                    return Err(DataError::Ingest {
                        row: r,
                        column: col.name.clone(),
                        detail: format!("non-finite value {v}"),
                    });
                }
                if col.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(DataError::Ingest {
                        row: r,
                        column: col.name.clone(),
                        detail: format!("binary column holds {v}"),
                    });
                }
            }
        }
        if let Some(l) = &anomaly_labels {
            if l.len() != n {
                return Err(DataError::Invalid(format!(
                    "{} anomaly labels for {n} rows",
                    l.len()
                )));
            }
            if let Some(i) = l.iter().position(|&v| v > 1) {
                return Err(DataError::Invalid(format!(
                    "anomaly label at row {i} is not 0/1"
                )));
            }
        }
        if let Some(m) = &metadata_labels {
            if m.len() != n {
                return Err(DataError::Invalid(format!(
                    "{} metadata labels for {n} rows",
                    m.len()
                )));
            }
            if let Some(i) = m
                .iter()
                .position(|v| v.is_some_and(|c| c >= metadata_categories.len()))
            {
                return Err(DataError::Invalid(format!(
                    "metadata label at row {i} outside {} categories",
                    metadata_categories.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            columns,
            values,
            anomaly_labels,
            metadata_labels,
            metadata_categories,
            scaled: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn anomaly_labels(&self) -> Option<&[u8]> {
        self.anomaly_labels.as_deref()
    }

    pub fn metadata_labels(&self) -> Option<&[Option<usize>]> {
        self.metadata_labels.as_deref()
    }

    pub fn metadata_categories(&self) -> &[String] {
        &self.metadata_categories
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn anomaly_count(&self) -> usize {
        self.anomaly_labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }

    /// Rows `idx` in order (indices may repeat).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            columns: self.columns.clone(),
            values: self.values.select_rows(idx),
            anomaly_labels: self
                .anomaly_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            metadata_labels: self
                .metadata_labels
                .as_ref()
                .map(|m| idx.iter().map(|&i| m[i]).collect()),
            metadata_categories: self.metadata_categories.clone(),
            scaled: self.scaled,
        }
    }

    /// Removes the given column indices.
    pub fn drop_columns(&self, drop: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|c| !drop.contains(c))
            .collect();
        Self {
            name: self.name.clone(),
            columns: keep.iter().map(|&c| self.columns[c].clone()).collect(),
            values: self.values.select_cols(&keep),
            anomaly_labels: self.anomaly_labels.clone(),
            metadata_labels: self.metadata_labels.clone(),
            metadata_categories: self.metadata_categories.clone(),
            scaled: self.scaled,
        }
    }

    pub(crate) fn with_values(&self, values: Matrix, scaled: bool) -> Self {
        Self {
            values,
            scaled,
            ..self.clone()
        }
    }

    pub fn without_labels(&self) -> Self {
        Self {
            anomaly_labels: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_column_rejects_fraction() {
        let v = Matrix::from_rows(&[vec![0.2, 1.0], vec![0.3, 0.5]]).unwrap();
        let err = TimeSeriesDataset::new(
            "t",
            vec![Column::continuous("a"), Column::binary("b")],
            v,
            None,
            None,
            vec![],
        )
        .unwrap_err();
        match err {
            DataError::Ingest { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn label_length_must_match() {
        let v = Matrix::zeros(3, 1);
        assert!(TimeSeriesDataset::new(
            "t",
            vec![Column::continuous("a")],
            v,
            Some(vec![0, 1]),
            None,
            vec![]
        )
        .is_err());
    }
}
