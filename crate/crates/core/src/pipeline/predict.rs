//! Single-recording diagnosis, predictor fitting and dataset utilities.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{preprocess_all, ExperimentConfig, PredictConfig};
use crate::dsp::PreprocessConfig;
use crate::error::{Error, Result};
use crate::gait::{dataset_summary, parse_recording_file, synthesize_dataset, Dataset, DatasetSummary, Label, Recording};
use crate::linpred::{fit_all_channels, fit_diagnostics, LinearPredictor};
use crate::models::{predict_recording, save_predictor, ModelBundle};

/// A stretch of the network input with unusually large residual energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub start: usize,
    pub end: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub peak_rms: f64,
    /// Channel with the largest rolling RMS at the peak.
    pub channel: usize,
}

/// Rolling RMS of every channel, their combination and the top regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    pub sample_rate_hz: f64,
    pub channel_rms: Vec<Vec<f64>>,
    pub total_rms: Vec<f64>,
    pub highlighted: Vec<bool>,
    pub regions: Vec<Region>,
}

fn rolling_rms(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v * v);
    }
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(n);
            ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).max(0.0).sqrt()
        })
        .collect()
}

/// Centered rolling RMS over `window` samples and the `top_k` highest,
/// mutually separated peaks of the channel-combined RMS.
pub fn residual_trace(signal: &Recording, window: usize, top_k: usize) -> ResidualTrace {
    let window = window.max(1);
    let n = signal.len();
    let channel_rms: Vec<Vec<f64>> = signal.channels.iter().map(|c| rolling_rms(c, window)).collect();
    let c = channel_rms.len().max(1) as f64;
    let total_rms: Vec<f64> = (0..n)
        .map(|i| (channel_rms.iter().map(|r| r[i] * r[i]).sum::<f64>() / c).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_rms[b].total_cmp(&total_rms[a]).then(a.cmp(&b)));
    let mut peaks: Vec<usize> = Vec::new();
    for i in order {
        if peaks.len() == top_k {
            break;
        }
        if peaks.iter().all(|&p| p.abs_diff(i) >= window) {
            peaks.push(i);
        }
    }
    let rate = signal.sample_rate_hz;
    let mut highlighted = vec![false; n];
    let regions = peaks
        .into_iter()
        .map(|p| {
            let start = p.saturating_sub(window / 2);
            let end = (p + window - window / 2).min(n);
            highlighted[start..end].iter_mut().for_each(|h| *h = true);
            let channel = (0..channel_rms.len())
                .max_by(|&a, &b| channel_rms[a][p].total_cmp(&channel_rms[b][p]))
                .unwrap_or(0);
            Region {
                start,
                end,
                start_s: start as f64 / rate,
                end_s: end as f64 / rate,
                peak_rms: total_rms[p],
                channel,
            }
        })
        .collect();
    ResidualTrace {
        sample_rate_hz: rate,
        channel_rms,
        total_rms,
        highlighted,
        regions,
    }
}

impl ResidualTrace {
    /// One row per sample: time, per-channel RMS, combined RMS and whether
    /// the sample lies in a reported region.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,time_s");
        for c in 0..self.channel_rms.len() {
            let _ = write!(out, ",rms_c{c:02}");
        }
        out.push_str(",rms_total,highlighted\n");
        for i in 0..self.total_rms.len() {
            let _ = write!(out, "{i},{:.4}", i as f64 / self.sample_rate_hz);
            for r in &self.channel_rms {
                let _ = write!(out, ",{:.6}", r[i]);
            }
            let _ = writeln!(out, ",{:.6},{}", self.total_rms[i], u8::from(self.highlighted[i]));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictReport {
    pub recording: String,
    pub variant: String,
    pub probability: f64,
    pub diagnosis: Label,
    pub channel_mean_abs_lpr: Option<Vec<f64>>,
    pub regions: Vec<Region>,
    pub trace_rows: usize,
    pub csv: Option<PathBuf>,
}

impl std::fmt::Display for PredictReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}: P(PD) = {:.4} -> {}", self.recording, self.probability, self.diagnosis)?;
        if let Some(m) = &self.channel_mean_abs_lpr {
            let (c, v) = m
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(c, v)| (c, *v))
                .unwrap_or_default();
            writeln!(f, "largest mean |residual|: channel {c} ({v:.4})")?;
        }
        for r in &self.regions {
            writeln!(
                f,
                "  {:>8.2}-{:<8.2} s  rms {:.4}  channel {}",
                r.start_s, r.end_s, r.peak_rms, r.channel
            )?;
        }
        Ok(())
    }
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_recording_file(path, &text)
}

/// Loads a bundle and a recording file, classifies the recording and
/// summarizes where its residual deviates most. With `csv_out` the
/// per-sample trace is written there.
pub fn predict_one(
    bundle_path: &Path,
    recording_path: &Path,
    cfg: &PredictConfig,
    csv_out: Option<&Path>,
) -> Result<PredictReport> {
    let mut bundle = ModelBundle::load(bundle_path)?;
    let rec = read_recording(recording_path)?;
    let pred = predict_recording(&mut bundle, &rec)?;
    let trace = residual_trace(&pred.network_input, cfg.rms_window, cfg.top_k);
    if let Some(path) = csv_out {
        fs::write(path, trace.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(PredictReport {
        recording: rec.key().to_string(),
        variant: bundle.variant.to_string(),
        probability: pred.probability,
        diagnosis: if pred.is_pd() { Label::Pd } else { Label::Control },
        channel_mean_abs_lpr: pred.channel_mean_abs_lpr,
        regions: trace.regions,
        trace_rows: trace.total_rms.len(),
        csv: csv_out.map(Path::to_path_buf),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitLpReport {
    pub order: usize,
    pub coefficients: usize,
    pub control_recordings: usize,
    pub control_subjects: usize,
    pub preprocessing: String,
    pub energy_ratio: Vec<f64>,
    pub path: Option<PathBuf>,
}

/// Fits the per-channel predictors on every control recording of `ds`.
pub fn fit_lp_cmd(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    out: Option<&Path>,
) -> Result<(LinearPredictor, FitLpReport)> {
    let pre_cfg = PreprocessConfig::FILTERED_DECIMATED.with_zero_mean(cfg.zero_mean);
    let raw_controls: Vec<Recording> = ds
        .recordings
        .iter()
        .filter(|r| r.label == Label::Control)
        .cloned()
        .collect();
    if raw_controls.is_empty() {
        return Err(Error::NoControlRecordings);
    }
    let controls = preprocess_all(&raw_controls, pre_cfg)?;
    let refs: Vec<&Recording> = controls.iter().collect();
    let lp = fit_all_channels(&refs, cfg.lp_order)?;
    let diag = fit_diagnostics(&lp, &refs)?;
    for (c, r) in diag.energy_ratio.iter().enumerate() {
        log::info!("channel {c:2}: residual/signal energy {r:.4}");
    }
    if let Some(path) = out {
        save_predictor(path, &lp, pre_cfg, &cfg.hash())?;
    }
    let mut subjects: Vec<_> = controls.iter().map(|r| r.subject).collect();
    subjects.dedup();
    let report = FitLpReport {
        order: lp.order(),
        coefficients: lp.total_coefficients(),
        control_recordings: controls.len(),
        control_subjects: subjects.len(),
        preprocessing: pre_cfg.to_string(),
        energy_ratio: diag.energy_ratio,
        path: out.map(Path::to_path_buf),
    };
    Ok((lp, report))
}

/// Summary of a dataset after parsing and validation.
pub fn ingest_check(ds: &Dataset) -> DatasetSummary {
    dataset_summary(ds)
}

/// Writes the configured synthetic dataset as PhysioNet-style text files.
pub fn synth_cmd(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    synthesize_dataset(&cfg.data.synthetic)?.export(dir)
}
