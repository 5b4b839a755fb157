//! PCA reconstruction and Isolation Forest detectors. Both score individual
//! rows rather than windows.

mod isoforest;
mod pca;

pub use isoforest::{
    c_factor, isoforest_fit, isoforest_random_search, isoforest_score, IsoForestModel,
    IsolationTree, SearchOutcome, SearchTry, MAX_CONTAMINATION, MAX_ESTIMATORS, MAX_SUBSAMPLE,
    MIN_ESTIMATORS,
};
pub use pca::{pca_fit, pca_reconstruct, PcaModel};
