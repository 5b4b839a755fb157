//! CSV ingestion with a JSON sidecar schema.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Column, TimeSeriesDataset};
use crate::error::DataError;
use crate::nn::Matrix;

pub const SCHEMA_VERSION: u32 = 1;

/// Declares feature columns and the optional label and metadata columns of a
/// CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub schema_version: u32,
    pub columns: Vec<Column>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata_column: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metadata_categories: Vec<String>,
    /// Decimal places used when writing values; `None` writes the shortest
    /// representation that reads back exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<usize>,
}

impl CsvSchema {
    pub fn for_dataset(ds: &TimeSeriesDataset) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            columns: ds.columns().to_vec(),
            label_column: ds.anomaly_labels().map(|_| "anomaly".to_string()),
            metadata_column: ds.metadata_labels().map(|_| "metadata".to_string()),
            metadata_categories: ds.metadata_categories().to_vec(),
            precision: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let s: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(DataError::Config(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                s.schema_version
            )));
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn find(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

/// Reads a CSV file with a header row according to `schema`.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesDataset, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let feature_idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| find(&headers, &c.name))
        .collect::<Result<_, _>>()?;
    let label_idx = schema
        .label_column
        .as_deref()
        .map(|n| find(&headers, n))
        .transpose()?;
    let meta_idx = schema
        .metadata_column
        .as_deref()
        .map(|n| find(&headers, n))
        .transpose()?;

    let mut data = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut meta = meta_idx.map(|_| Vec::new());
    let mut rows = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (col, &i) in schema.columns.iter().zip(&feature_idx) {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| DataError::Ingest {
                row: r,
                column: col.name.clone(),
                detail: format!("`{cell}` is not a number"),
            })?;
            data.push(v);
        }
        if let (Some(i), Some(l)) = (label_idx, labels.as_mut()) {
            let cell = rec.get(i).unwrap_or("").trim();
            let v = match cell {
                "0" | "0.0" => 0,
                "1" | "1.0" => 1,
                _ => {
                    return Err(DataError::Ingest {
                        row: r,
                        column: schema.label_column.clone().unwrap_or_default(),
                        detail: format!("label `{cell}` is not 0 or 1"),
                    })
                }
            };
            l.push(v);
        }
        if let (Some(i), Some(m)) = (meta_idx, meta.as_mut()) {
            let cell = rec.get(i).unwrap_or("").trim();
            if cell.is_empty() {
                m.push(None);
            } else {
                let c = schema
                    .metadata_categories
                    .iter()
                    .position(|k| k == cell)
                    .ok_or_else(|| DataError::Ingest {
                        row: r,
                        column: schema.metadata_column.clone().unwrap_or_default(),
                        detail: format!("unknown category `{cell}`"),
                    })?;
                m.push(Some(c));
            }
        }
        rows += 1;
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let values = Matrix::from_vec(rows, schema.columns.len(), data)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    TimeSeriesDataset::new(
        name,
        schema.columns.clone(),
        values,
        labels,
        meta,
        schema.metadata_categories.clone(),
    )
}

fn fmt_value(v: f64, precision: Option<usize>) -> String {
    match precision {
        Some(p) => format!("{v:.p$}"),
        None => format!("{v}"),
    }
}

/// Writes `ds` with the column names from `schema`.
pub fn write_csv(path: &Path, ds: &TimeSeriesDataset, schema: &CsvSchema) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ds.columns().iter().map(|c| c.name.clone()).collect();
    if let Some(l) = &schema.label_column {
        header.push(l.clone());
    }
    if let Some(m) = &schema.metadata_column {
        header.push(m.clone());
    }
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds
            .values()
            .row(r)
            .iter()
            .zip(ds.columns())
            .map(|(&v, c)| match c.kind {
                super::ColumnKind::Binary => format!("{}", v as u8),
                super::ColumnKind::Continuous => fmt_value(v, schema.precision),
            })
            .collect();
        if schema.label_column.is_some() {
            let l = ds.anomaly_labels().map_or(0, |l| l[r]);
            rec.push(l.to_string());
        }
        if schema.metadata_column.is_some() {
            let cell = ds
                .metadata_labels()
                .and_then(|m| m[r])
                .map(|c| ds.metadata_categories()[c].clone())
                .unwrap_or_default();
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
