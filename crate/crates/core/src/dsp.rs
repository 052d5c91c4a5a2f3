//! Signal preprocessing: causal moving average, 2x decimation, unit-variance
//! scaling and overlapped windowing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{Label, Recording, RecordingKey};

/// Causal FIR average `y(n) = (1/order) * sum_{i<order} x(n-i)` with zero
/// initial conditions.
pub fn moving_average(x: &[f64], order: usize) -> Vec<f64> {
    assert!(order >= 1, "moving average order must be positive");
    let scale = 1.0 / order as f64;
    (0..x.len())
        .map(|n| x[n.saturating_sub(order - 1)..=n].iter().sum::<f64>() * scale)
        .collect()
}

/// Keeps the samples at even indices. The caller is responsible for low-pass
/// filtering first.
pub fn decimate2(x: &[f64]) -> Vec<f64> {
    x.iter().step_by(2).copied().collect()
}

fn population_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Divides every channel by its population standard deviation. With
/// `zero_mean` the channel mean is removed first.
pub fn normalize_unit_variance(channels: &[Vec<f64>], zero_mean: bool) -> Result<Vec<Vec<f64>>> {
    channels
        .iter()
        .enumerate()
        .map(|(c, x)| {
            if x.is_empty() {
                return Err(Error::ZeroVarianceChannel { channel: c });
            }
            let (mean, var) = population_moments(x);
            let std = var.sqrt();
            if !std.is_finite() || std <= 0.0 || std <= 1e-12 * mean.abs() {
                return Err(Error::ZeroVarianceChannel { channel: c });
            }
            let shift = if zero_mean { mean } else { 0.0 };
            Ok(x.iter().map(|v| (v - shift) / std).collect())
        })
        .collect()
}

/// Which preprocessing chain produced a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocessing {
    /// Unit-variance scaling at the source rate.
    Normalized,
    /// Order-2 moving average, 2x decimation, then unit-variance scaling.
    FilteredDecimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub chain: Preprocessing,
    pub zero_mean: bool,
}

impl PreprocessConfig {
    pub const NORMALIZED: Self = Self {
        chain: Preprocessing::Normalized,
        zero_mean: false,
    };
    pub const FILTERED_DECIMATED: Self = Self {
        chain: Preprocessing::FilteredDecimated,
        zero_mean: false,
    };

    pub fn with_zero_mean(self, zero_mean: bool) -> Self {
        Self { zero_mean, ..self }
    }

    /// Output sample rate for a given input rate.
    pub fn output_rate(&self, input_rate: f64) -> f64 {
        match self.chain {
            Preprocessing::Normalized => input_rate,
            Preprocessing::FilteredDecimated => input_rate / 2.0,
        }
    }
}

impl fmt::Display for PreprocessConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self.chain {
            Preprocessing::Normalized => "norm",
            Preprocessing::FilteredDecimated => "ma2-dec2-norm",
        })?;
        if self.zero_mean {
            f.write_str("+zero-mean")?;
        }
        Ok(())
    }
}

impl FromStr for PreprocessConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (chain, zero_mean) = match s.strip_suffix("+zero-mean") {
            Some(c) => (c, true),
            None => (s, false),
        };
        let chain = match chain {
            "norm" => Preprocessing::Normalized,
            "ma2-dec2-norm" => Preprocessing::FilteredDecimated,
            _ => return Err(Error::Format(format!("unknown preprocessing tag `{s}`"))),
        };
        Ok(Self { chain, zero_mean })
    }
}

/// Runs a preprocessing chain over every channel of a recording.
pub fn preprocess(rec: &Recording, cfg: PreprocessConfig) -> Result<Recording> {
    let shaped: Vec<Vec<f64>> = match cfg.chain {
        Preprocessing::Normalized => rec.channels.clone(),
        Preprocessing::FilteredDecimated => rec
            .channels
            .iter()
            .map(|x| decimate2(&moving_average(x, 2)))
            .collect(),
    };
    let channels = normalize_unit_variance(&shaped, cfg.zero_mean)?;
    rec.with_channels(channels, cfg.output_rate(rec.sample_rate_hz))
}

/// A fixed-length slice of a recording, stored channel-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub data: Vec<f32>,
    pub channels: usize,
    pub width: usize,
    pub label: Label,
    pub source: RecordingKey,
    pub offset: usize,
}

impl Window {
    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.width..(c + 1) * self.width]
    }
}

pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    if len < window_len {
        0
    } else {
        (len - window_len) / stride + 1
    }
}

/// Cuts windows at offsets `0, stride, 2*stride, ...`; the tail that does not
/// fill a window is dropped.
pub fn make_windows(rec: &Recording, window_len: usize, stride: usize) -> Result<Vec<Window>> {
    make_windows_from(rec.key(), rec.label, &rec.channels, window_len, stride)
}

pub fn make_windows_from(
    source: RecordingKey,
    label: Label,
    channels: &[Vec<f64>],
    window_len: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    assert!(window_len >= 1 && stride >= 1, "window length and stride must be positive");
    let len = channels.first().map_or(0, Vec::len);
    if len < window_len {
        return Err(Error::RecordingTooShort {
            len,
            needed: window_len,
        });
    }
    let count = window_count(len, window_len, stride);
    Ok((0..count)
        .map(|w| {
            let offset = w * stride;
            let mut data = Vec::with_capacity(channels.len() * window_len);
            for ch in channels {
                data.extend(ch[offset..offset + window_len].iter().map(|&v| v as f32));
            }
            Window {
                data,
                channels: channels.len(),
                width: window_len,
                label,
                source,
                offset,
            }
        })
        .collect())
}
