//! Ingestion, preprocessing, splitting, windowing and synthetic data.

mod csv_io;
mod dataset;
mod pipeline;
mod scaler;
mod split;
mod synth;
mod window;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use dataset::{Column, ColumnKind, TimeSeriesDataset};
pub use pipeline::{
    DatasetBundle, SplitBundle, SplitKind, SplitManifest, SplitSizes, Stage,
    MANIFEST_SCHEMA_VERSION,
};
pub use scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use split::{even_odd_split_duplicate, split_rows, SplitRows};
pub use synth::{
    synth_generate, AnomalySegment, AnomalyStyle, SynthConfig, SynthOutput, STATUS_CATEGORIES,
    SYNTH_SCHEMA_VERSION,
};
pub use window::{windowize, RowSpan, WindowBatch};
