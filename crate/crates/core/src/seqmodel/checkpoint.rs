//! Model checkpoints as versioned JSON.
//!
//! ```json
//! { "format": "affect-fusion.checkpoint", "version": 1,
//!   "model": { "input_dim": 16, "lstm_units": [16, 8], "dropout_rate": 0.4 },
//!   "label_shift": 1,
//!   "standardizer": { "mean": [...], "scale": [...] },
//!   "params": [ ...flat parameter vector... ] }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed exactly, so
//! save + load reproduces every parameter bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelResult, ParamSet};
use crate::dataio::Standardizer;

pub const CHECKPOINT_FORMAT: &str = "affect-fusion.checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub label_shift: i64,
    pub standardizer: Option<Standardizer>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &ParamSet, label_shift: i64, standardizer: Option<Standardizer>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: params.config().clone(),
            label_shift,
            standardizer,
            params: params.as_flat().to_vec(),
        }
    }

    pub fn params(&self) -> ModelResult<ParamSet> {
        ParamSet::from_flat(&self.model, self.params.clone())
    }

    pub fn to_json(&self) -> ModelResult<String> {
        serde_json::to_string(self).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> ModelResult<Self> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unknown format {:?}",
                c.format
            )));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {}",
                c.version
            )));
        }
        c.params()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> ModelResult<()> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> ModelResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
