//! Experiment orchestration: the leakage study, cross-validated training,
//! benchmarking, single-recording diagnosis and predictor fitting.
//!
//! Seeds of every random stage derive from `ExperimentConfig::seed` through
//! [`crate::rng::derive_seed`], and each run records them in its
//! [`RunReport`].

mod bench;
mod config;
mod crossval;
mod leakage;
mod predict;
mod report;

use std::path::Path;

use rayon::prelude::*;

use crate::dsp::{preprocess, PreprocessConfig};
use crate::error::Result;
use crate::gait::{scan_dataset_dir, synthesize_dataset, Dataset, Recording};

pub use bench::{run_bench, synthetic_bench_recording, BenchReport};
pub use config::{
    BenchConfig, CrossvalConfig, DataConfig, ExperimentConfig, LeakageConfig, ModelConfig, PredictConfig,
};
pub use crossval::{run_crossval, CrossvalOutcome, FoldOutcome};
pub use leakage::{run_leakage_experiment, LeakageReport, LeakageRepeat, StrategyResult};
pub use predict::{
    fit_lp_cmd, ingest_check, predict_one, read_recording, residual_trace, synth_cmd, FitLpReport, PredictReport, Region,
    ResidualTrace,
};
pub use report::{write_json, RunReport, StageLog};

/// Loads the configured dataset: the directory when set, otherwise the
/// synthetic generator.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data.dir {
        Some(dir) => scan_dataset_dir(dir),
        None => synthesize_dataset(&cfg.data.synthetic),
    }
}

/// Preprocesses every recording in parallel, keeping order.
pub fn preprocess_all(recordings: &[Recording], pre: PreprocessConfig) -> Result<Vec<Recording>> {
    recordings.par_iter().map(|r| preprocess(r, pre)).collect()
}

/// Creates `dir` and its parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))
}
