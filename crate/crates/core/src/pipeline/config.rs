use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gait::SyntheticSpec;
use crate::linpred::DEFAULT_ORDER;
use crate::models::{BaselineDims, LpgnetDims};
use crate::nn::TrainConfig;
use crate::splits::{DEFAULT_HOLDOUT_FRACTION, DEFAULT_VAL_FRACTION};

/// Where recordings come from. A directory wins over the synthetic spec.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageConfig {
    pub holdout_fraction: f64,
    pub val_fraction: f64,
    pub window_len: usize,
    pub stride: usize,
    pub repeats: usize,
    pub train: TrainConfig,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: DEFAULT_HOLDOUT_FRACTION,
            val_fraction: DEFAULT_VAL_FRACTION,
            window_len: 100,
            stride: 50,
            repeats: 1,
            train: TrainConfig::baseline(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    pub folds: usize,
    /// Fraction of training-fold subjects held out to monitor training.
    pub inner_val_fraction: f64,
    /// Window stride as a fraction of the window length.
    pub stride_fraction: f64,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    /// Training of the baseline variant.
    pub baseline: TrainConfig,
    /// Run folds on the rayon pool.
    pub parallel_folds: bool,
    pub save_bundles: bool,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            inner_val_fraction: DEFAULT_VAL_FRACTION,
            stride_fraction: 0.5,
            stage1: TrainConfig::stage1(),
            stage2: TrainConfig::stage2(),
            baseline: TrainConfig::baseline(),
            parallel_folds: true,
            save_bundles: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lpgnet: LpgnetDims,
    pub baseline: BaselineDims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub warmup: usize,
    pub runs: usize,
    pub duration_s: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: 10,
            runs: 1000,
            duration_s: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub top_k: usize,
    /// Rolling RMS length in samples of the network input.
    pub rms_window: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            rms_window: 50,
        }
    }
}

/// Everything a run needs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub lp_order: usize,
    /// Subtract the channel mean before unit-variance scaling.
    pub zero_mean: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub leakage: LeakageConfig,
    pub crossval: CrossvalConfig,
    pub bench: BenchConfig,
    pub predict: PredictConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            lp_order: DEFAULT_ORDER,
            zero_mean: false,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            leakage: LeakageConfig::default(),
            crossval: CrossvalConfig::default(),
            bench: BenchConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.lp_order == 0 {
            return Err(Error::Config("lp_order must be positive".into()));
        }
        for t in [
            &self.leakage.train,
            &self.crossval.stage1,
            &self.crossval.stage2,
            &self.crossval.baseline,
        ] {
            t.validate()?;
        }
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie strictly between 0 and 1")))
            }
        };
        frac("leakage.holdout_fraction", self.leakage.holdout_fraction)?;
        frac("leakage.val_fraction", self.leakage.val_fraction)?;
        frac("crossval.inner_val_fraction", self.crossval.inner_val_fraction)?;
        if !(self.crossval.stride_fraction > 0.0 && self.crossval.stride_fraction <= 1.0) {
            return Err(Error::Config("crossval.stride_fraction must lie in (0, 1]".into()));
        }
        if self.leakage.window_len == 0 || self.leakage.stride == 0 || self.leakage.repeats == 0 {
            return Err(Error::Config("leakage window_len, stride and repeats must be positive".into()));
        }
        if self.crossval.folds < 2 {
            return Err(Error::Config("crossval.folds must be at least 2".into()));
        }
        if self.bench.runs == 0 || self.predict.rms_window == 0 {
            return Err(Error::Config("bench.runs and predict.rms_window must be positive".into()));
        }
        self.data.synthetic.validate()
    }

    /// Short SHA-256 digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
