use std::path::{Path, PathBuf};

use dictdis_core::decoding::DecodeConfig;
use dictdis_core::evaluation::BootstrapConfig;
use dictdis_core::model::ModelConfig;
use dictdis_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub min_freq: usize,
    /// Leftmost dictionary matches kept per sentence.
    pub max_constraints: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { min_freq: 1, max_constraints: 15 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub src: Option<PathBuf>,
    pub tgt: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    /// Prepared data directory (input of `train`).
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
}

/// Everything a run needs; loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub data: DataConfig,
    pub bootstrap: BootstrapConfig,
    /// Overrides both the model initialization and training seeds.
    pub seed: Option<u64>,
    /// Translate without dictionary constraints.
    pub unconstrained: bool,
    pub threads: Option<usize>,
    /// Keep wall-clock fields out of every output file.
    pub deterministic: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, Some(e.line()), e.to_string()))
    }

    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.model.seed = seed;
            self.train.seed = seed;
        }
    }
}

/// Returns the path or a config error naming the missing flag.
pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("missing required path --{flag}")))
}
