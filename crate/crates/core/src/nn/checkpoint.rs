//! Versioned JSON snapshots of a [`ParamStore`].

use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use super::Matrix;
use crate::error::NnError;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        let params = store
            .ids()
            .map(|id| {
                let m = store.get(id);
                ParamEntry {
                    name: store.name(id).to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                    values: m.data().to_vec(),
                }
            })
            .collect();
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            params,
        }
    }

    /// Rebuilds a store; ids follow entry order.
    pub fn to_store(&self) -> Result<ParamStore, NnError> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let mut store = ParamStore::new();
        for p in &self.params {
            let m = Matrix::from_vec(p.rows, p.cols, p.values.clone())
                .map_err(|e| NnError::Checkpoint(format!("`{}`: {e}", p.name)))?;
            store.add(p.name.clone(), m);
        }
        Ok(store)
    }

    /// Copies values into an existing store, checking names and shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<(), NnError> {
        let loaded = self.to_store()?;
        if loaded.len() != store.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                loaded.len(),
                store.len()
            )));
        }
        for id in store.ids().collect::<Vec<_>>() {
            if loaded.name(id) != store.name(id) || loaded.get(id).shape() != store.get(id).shape()
            {
                return Err(NnError::Checkpoint(format!(
                    "parameter `{}` does not match checkpoint entry `{}`",
                    store.name(id),
                    loaded.name(id)
                )));
            }
            *store.get_mut(id) = loaded.get(id).clone();
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}
