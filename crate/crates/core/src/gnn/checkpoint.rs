use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "neubm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON container: model config, flat parameter vector and training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model_config: ModelConfig,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model_config: params.config().clone(),
            seed,
            params: params.flat(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::from_flat(&self.model_config, &self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::parse(path, 1, format!("unknown format '{}'", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::parse(path, 1, format!("unsupported version {}", ck.version)));
        }
        ck.params()?;
        Ok(ck)
    }
}
