use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::BenchConfig;
use crate::error::{Error, Result};
use crate::gait::{synthesize_dataset, Recording, SyntheticSpec};
use crate::metrics::MeanStd;
use crate::models::{predict_recording, ModelBundle};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub runs: usize,
    pub warmup: usize,
    pub recording_samples: usize,
    pub recording_rate_hz: f64,
    /// End-to-end milliseconds per recording.
    pub total_ms: MeanStd,
    pub preprocess_ms: MeanStd,
    pub lpr_ms: MeanStd,
    pub cnn_ms: MeanStd,
    /// Cost of the timing harness around an empty call.
    pub noop_ms: MeanStd,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} runs on {} samples at {} Hz (single thread)",
            self.runs, self.recording_samples, self.recording_rate_hz
        )?;
        writeln!(f, "  total      {:.3} ± {:.3} ms", self.total_ms.mean, self.total_ms.std)?;
        writeln!(f, "  preprocess {:.3} ms", self.preprocess_ms.mean)?;
        writeln!(f, "  lpr        {:.3} ms", self.lpr_ms.mean)?;
        writeln!(f, "  cnn        {:.3} ms", self.cnn_ms.mean)?;
        write!(f, "  harness    {:.6} ms", self.noop_ms.mean)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn stats(v: &[f64]) -> MeanStd {
    MeanStd::of(v).unwrap_or_default()
}

/// A two-minute (or `duration_s`) synthetic control-like recording.
pub fn synthetic_bench_recording(duration_s: f64, seed: u64) -> Result<Recording> {
    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 1,
        walks_per_subject: 1,
        duration_s,
        seed,
        ..SyntheticSpec::default()
    })?;
    ds.recordings
        .into_iter()
        .find(|r| !r.label.is_pd())
        .ok_or(Error::NoControlRecordings)
}

/// Times `predict_recording` on one thread: `warmup` untimed runs, then
/// `runs` timed ones.
pub fn run_bench(bundle: &mut ModelBundle, rec: &Recording, cfg: &BenchConfig) -> Result<BenchReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        for _ in 0..cfg.warmup {
            black_box(predict_recording(bundle, rec)?);
        }
        let mut total = Vec::with_capacity(cfg.runs);
        let mut pre = Vec::with_capacity(cfg.runs);
        let mut lpr = Vec::with_capacity(cfg.runs);
        let mut cnn = Vec::with_capacity(cfg.runs);
        for _ in 0..cfg.runs {
            let t = Instant::now();
            let p = black_box(predict_recording(bundle, rec)?);
            total.push(ms(t.elapsed()));
            pre.push(ms(p.timings.preprocess));
            lpr.push(ms(p.timings.lpr));
            cnn.push(ms(p.timings.cnn));
        }
        let noop: Vec<f64> = (0..cfg.runs)
            .map(|i| {
                let t = Instant::now();
                black_box(i);
                ms(t.elapsed())
            })
            .collect();
        Ok(BenchReport {
            runs: cfg.runs,
            warmup: cfg.warmup,
            recording_samples: rec.len(),
            recording_rate_hz: rec.sample_rate_hz,
            total_ms: stats(&total),
            preprocess_ms: stats(&pre),
            lpr_ms: stats(&lpr),
            cnn_ms: stats(&cnn),
            noop_ms: stats(&noop),
        })
    })
}
