use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::write_file;

/// `manifest.json`: enough to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the resolved configuration JSON.
    pub config_hash: String,
    pub files: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, seed: u64, files: Vec<String>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash: cfg.hash(),
            files,
            config: cfg.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        write_file(&dir.join("manifest.json"), s.as_bytes())
    }
}
