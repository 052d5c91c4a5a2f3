use std::time::{Duration, Instant};

use serde::Serialize;

use super::{ModelBundle, ModelSpec};
use crate::dsp::{make_windows, preprocess, Window};
use crate::error::{Error, Result};
use crate::gait::Recording;
use crate::nn::{Network, Tensor, PROB_CLAMP};

fn clamp_prob(p: f32) -> f64 {
    (p as f64).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Eval-mode probability for a single `channels x width` window.
pub fn predict_window(net: &mut Network<f32>, spec: &ModelSpec, window: &Window) -> Result<f64> {
    spec.check_input(window.channels, window.width)?;
    let x = Tensor::new(vec![1, window.channels, window.width], window.data.clone())?;
    Ok(clamp_prob(net.infer(x)?.data()[0]))
}

/// Wall-clock split of one recording prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub preprocess: Duration,
    pub lpr: Duration,
    pub cnn: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.preprocess + self.lpr + self.cnn
    }
}

/// Recording-level prediction with its trace.
#[derive(Debug, Clone)]
pub struct RecordingPrediction {
    pub probability: f64,
    /// Window probabilities that were averaged (baseline only).
    pub window_probs: Vec<f64>,
    /// Mean absolute residual per channel (predictor bundles only).
    pub channel_mean_abs_lpr: Option<Vec<f64>>,
    /// The signal the network consumed: the residual for predictor bundles,
    /// the preprocessed recording otherwise.
    pub network_input: Recording,
    pub timings: StageTimings,
}

impl RecordingPrediction {
    pub fn is_pd(&self) -> bool {
        self.probability >= crate::metrics::THRESHOLD
    }
}

fn recording_tensor(rec: &Recording) -> Result<Tensor<f32>> {
    let n = rec.len();
    let data = rec.channels.iter().flatten().map(|&v| v as f32).collect();
    Tensor::new(vec![1, rec.channels.len(), n], data)
}

/// Classifies a raw recording.
///
/// Full-recording variants run one forward pass over the whole preprocessed
/// (and, with a predictor, residual) signal. The baseline averages the
/// probabilities of 50%-overlapping windows.
pub fn predict_recording(bundle: &mut ModelBundle, rec: &Recording) -> Result<RecordingPrediction> {
    let t0 = Instant::now();
    let pre = preprocess(rec, bundle.preprocessing)?;
    let t1 = Instant::now();
    let (input, lpr_abs) = match &bundle.predictor {
        Some(lp) => {
            let res = lp.residual(&pre)?;
            let abs = res.channel_mean_abs();
            (res.into_inner(), Some(abs))
        }
        None => (pre, None),
    };
    let t2 = Instant::now();
    let (probability, window_probs) = if bundle.variant.full_recording() {
        let needed = bundle.spec.min_input_len();
        if input.len() < needed {
            return Err(Error::RecordingTooShort { len: input.len(), needed });
        }
        bundle.spec.check_input(input.channels.len(), input.len())?;
        let out = bundle.network.infer(recording_tensor(&input)?)?;
        (clamp_prob(out.data()[0]), Vec::new())
    } else {
        let len = bundle.spec.input_len.unwrap_or(bundle.variant.window_len());
        let windows = make_windows(&input, len, len / 2)?;
        let mut data = Vec::with_capacity(windows.len() * input.channels.len() * len);
        for w in &windows {
            bundle.spec.check_input(w.channels, w.width)?;
            data.extend_from_slice(&w.data);
        }
        let x = Tensor::new(vec![windows.len(), input.channels.len(), len], data)?;
        let probs: Vec<f64> = bundle.network.infer(x)?.data().iter().map(|&p| clamp_prob(p)).collect();
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        (mean, probs)
    };
    let t3 = Instant::now();
    Ok(RecordingPrediction {
        probability,
        window_probs,
        channel_mean_abs_lpr: lpr_abs,
        network_input: input,
        timings: StageTimings {
            preprocess: t1 - t0,
            lpr: t2 - t1,
            cnn: t3 - t2,
        },
    })
}
