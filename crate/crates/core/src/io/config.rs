use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::TrainConfig;
use crate::model::ModelConfig;

/// Everything a CLI run needs. Unspecified fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Record ids; empty `train` means every record in the directory.
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub model: ModelConfig,
    pub optim: TrainConfig,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            model: ModelConfig::default(),
            optim: TrainConfig::default(),
            output: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            field: "config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.optim.train_sample == 0 || self.optim.inf_sample == 0 {
            return Err(Error::Parse {
                field: "optim".into(),
                message: "sample sizes must be positive".into(),
            });
        }
        if !(self.optim.lr > 0.0) {
            return Err(Error::Parse {
                field: "optim.lr".into(),
                message: "learning rate must be positive".into(),
            });
        }
        Ok(())
    }
}
