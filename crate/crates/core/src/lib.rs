//! Parkinson's gait classification from vertical ground reaction force (VGRF)
//! recordings.
//!
//! The pipeline fits per-channel linear predictors on control gait, turns every
//! recording into its linear prediction residual (LPR) and classifies the
//! residual with a small depthwise-separable 1D CNN. The crate also carries the
//! tooling to study how train/validation split strategies leak subject
//! identity into validation scores.
//!
//! Module map:
//!
//! - [`gait`]: PhysioNet VGRF ingestion and a synthetic AR-process generator.
//! - [`dsp`]: moving average, 2x decimation, unit-variance scaling, windowing.
//! - [`linpred`]: autocorrelation-method LP fitting and residual generation.
//! - [`nn`]: dense tensors, layers with hand-written backward passes, Adam.
//! - [`models`]: baseline CNN and LPGNet specs, inference, model bundles.
//! - [`splits`]: holdout, leakage-prone split strategies, stratified k-fold.
//! - [`metrics`]: accuracy, F1, rank AUC and fold aggregation.
//! - [`pipeline`]: experiment orchestration, configuration and reports.
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/`
//! directory.

pub mod dsp;
pub mod error;
pub mod gait;
pub mod linpred;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod splits;

pub use error::{Error, Result};
pub use gait::{Dataset, Label, Recording, RecordingKey, SubjectId, SyntheticSpec};
pub use linpred::{LinearPredictor, LprRecording};
pub use models::{ModelBundle, ModelSpec, Variant};

/// Number of VGRF channels in every recording: 8 sensors per foot plus the
/// two per-foot totals.
pub const NUM_CHANNELS: usize = 18;
