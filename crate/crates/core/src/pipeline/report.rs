use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::TrainHistory;

/// Training log of one stage of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageLog {
    pub name: String,
    pub seed: u64,
    pub history: TrainHistory,
}

/// Record of a run: what was asked, with which seeds, what came out.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub timings_s: BTreeMap<String, f64>,
    pub stages: Vec<StageLog>,
    pub result: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), cfg.seed);
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            seeds,
            timings_s: BTreeMap::new(),
            stages: Vec::new(),
            result: serde_json::Value::Null,
            artifacts: Vec::new(),
        }
    }

    pub fn set_result<T: Serialize>(&mut self, value: &T) -> Result<()> {
        self.result = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Writes `run_report.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        super::ensure_dir(dir)?;
        let path = dir.join("run_report.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
