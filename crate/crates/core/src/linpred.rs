//! Linear prediction fitted on control gait, and linear prediction residuals.
//!
//! A predictor of order `p` estimates each sample from the previous `p`:
//! `x_hat(n) = -sum_{i=1..p} a(i) x(n-i)`, so the residual is
//! `e(n) = x(n) + sum_{i=1..p} a(i) x(n-i)`.
//!
//! Coefficients come from the autocorrelation method: the signal is
//! zero-extended and the squared residual is minimised over the full
//! convolution range `n = 0 .. m+p-1`. That gives Toeplitz normal equations
//! `R a = -r`, solved here by Cholesky.

use std::ops::Deref;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gait::{Label, Recording};
use crate::NUM_CHANNELS;

pub const DEFAULT_ORDER: usize = 11;

/// Autocorrelation lags `r(0..=max_lag)` of the zero-extended signal.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                0.0
            } else {
                x[k..].iter().zip(x).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// In-place Cholesky factorisation of a dense symmetric matrix stored
/// row-major. Returns `false` when a pivot is not safely positive.
fn cholesky(a: &mut [f64], n: usize, floor: f64) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !d.is_finite() || d <= floor {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves the order-`p` normal equations given autocorrelation lags
/// `r(0..=p)`. A ridge of `1e-8 * r(0)` is added once if the plain system is
/// not positive definite.
pub fn solve_normal_equations(r: &[f64], p: usize) -> Result<Vec<f64>> {
    assert!(r.len() > p);
    let toeplitz = |ridge: f64| {
        let mut m = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                m[i * p + j] = r[i.abs_diff(j)];
            }
            m[i * p + i] += ridge;
        }
        m
    };
    let floor = r[0].abs() * 1e-15;
    for ridge in [0.0, 1e-8 * r[0]] {
        let mut l = toeplitz(ridge);
        if cholesky(&mut l, p, floor) {
            let mut a: Vec<f64> = r[1..=p].iter().map(|v| -v).collect();
            cholesky_solve(&l, p, &mut a);
            if a.iter().all(|v| v.is_finite()) {
                return Ok(a);
            }
        }
    }
    Err(Error::SingularSystem { channel: None })
}

/// Least-squares predictor coefficients `a(1..p)` for `x`.
pub fn fit_lp(x: &[f64], p: usize) -> Result<Vec<f64>> {
    if x.len() <= p {
        return Err(Error::OrderTooLarge {
            len: x.len(),
            order: p,
        });
    }
    solve_normal_equations(&autocorrelation(x, p), p)
}

/// `e(n) = x(n) + sum a(i) x(n-i)` for `n = 0..len(x)` with zero initial
/// conditions.
pub fn residual_signal(a: &[f64], x: &[f64]) -> Vec<f64> {
    let p = a.len();
    (0..x.len())
        .map(|n| {
            let mut e = x[n];
            for i in 1..=p.min(n) {
                e += a[i - 1] * x[n - i];
            }
            e
        })
        .collect()
}

/// Squared residual summed over the full range `n = 0..m+p`, the objective
/// minimised by [`fit_lp`].
pub fn full_range_error(a: &[f64], x: &[f64]) -> f64 {
    let p = a.len();
    let m = x.len();
    let at = |n: isize| if n >= 0 && (n as usize) < m { x[n as usize] } else { 0.0 };
    (0..(m + p) as isize)
        .map(|n| {
            let mut e = at(n);
            for i in 1..=p {
                e += a[i - 1] * at(n - i as isize);
            }
            e * e
        })
        .sum()
}

/// Concatenates channel `channel` of the given control recordings, sorted by
/// (subject, walk), with `p` zeros between consecutive recordings.
pub fn build_fitting_signal(controls: &[&Recording], channel: usize, p: usize) -> Result<Vec<f64>> {
    if controls.is_empty() {
        return Err(Error::NoControlRecordings);
    }
    assert!(channel < NUM_CHANNELS, "channel index out of range");
    let mut sorted = controls.to_vec();
    sorted.sort_by_key(|r| r.key());
    let total: usize = sorted.iter().map(|r| r.len()).sum::<usize>() + p * (sorted.len() - 1);
    let mut out = Vec::with_capacity(total);
    for (i, rec) in sorted.iter().enumerate() {
        if i > 0 {
            out.extend(std::iter::repeat_n(0.0, p));
        }
        out.extend_from_slice(&rec.channels[channel]);
    }
    Ok(out)
}

/// One order-`p` predictor per VGRF channel. Coefficients are kept at the
/// 32-bit precision they are stored with.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    order: usize,
    coeffs: Vec<Vec<f32>>,
}

impl LinearPredictor {
    pub fn new(order: usize, coeffs: Vec<Vec<f32>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("prediction order must be positive".into()));
        }
        if coeffs.len() != NUM_CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "predictor needs {NUM_CHANNELS} coefficient vectors, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| c.len() != order) {
            return Err(Error::ShapeMismatch(format!(
                "every coefficient vector must have length {order}"
            )));
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite predictor coefficient".into()));
        }
        Ok(Self { order, coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        Self::new(order, vec![vec![0.0; order]; NUM_CHANNELS]).expect("valid shape")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[Vec<f32>] {
        &self.coeffs
    }

    pub fn channel_f64(&self, c: usize) -> Vec<f64> {
        self.coeffs[c].iter().map(|&v| v as f64).collect()
    }

    pub fn total_coefficients(&self) -> usize {
        self.coeffs.len() * self.order
    }

    /// Residual recording of a preprocessed recording.
    pub fn residual(&self, rec: &Recording) -> Result<LprRecording> {
        residual(self, rec)
    }
}

/// Residual of a preprocessed recording under a fitted predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct LprRecording(Recording);

impl LprRecording {
    pub fn into_inner(self) -> Recording {
        self.0
    }

    /// Mean absolute residual per channel.
    pub fn channel_mean_abs(&self) -> Vec<f64> {
        self.0
            .channels
            .iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

impl Deref for LprRecording {
    type Target = Recording;

    fn deref(&self) -> &Recording {
        &self.0
    }
}

pub fn residual(lp: &LinearPredictor, rec: &Recording) -> Result<LprRecording> {
    if rec.channels.len() != NUM_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "recording has {} channels, predictor expects {NUM_CHANNELS}",
            rec.channels.len()
        )));
    }
    let channels = rec
        .channels
        .iter()
        .enumerate()
        .map(|(c, x)| residual_signal(&lp.channel_f64(c), x))
        .collect();
    Ok(LprRecording(Recording {
        channels,
        ..rec.clone()
    }))
}

/// Fits one predictor per channel on the concatenated control recordings.
/// Passing a PD recording is a contract violation.
pub fn fit_all_channels(controls: &[&Recording], p: usize) -> Result<LinearPredictor> {
    if controls.is_empty() {
        return Err(Error::NoControlRecordings);
    }
    if let Some(r) = controls.iter().find(|r| r.label != Label::Control) {
        return Err(Error::ContractViolation(format!(
            "linear predictors are fitted on control gait only, got {}",
            r.key()
        )));
    }
    if let Some(r) = controls.iter().find(|r| r.channels.len() != NUM_CHANNELS) {
        return Err(Error::ShapeMismatch(format!("{} has {} channels", r.key(), r.channels.len())));
    }
    let coeffs = (0..NUM_CHANNELS)
        .into_par_iter()
        .map(|c| {
            let x = build_fitting_signal(controls, c, p)?;
            let a = fit_lp(&x, p).map_err(|e| match e {
                Error::SingularSystem { .. } => Error::SingularSystem { channel: Some(c) },
                other => other,
            })?;
            Ok(a.into_iter().map(|v| v as f32).collect())
        })
        .collect::<Result<Vec<Vec<f32>>>>()?;
    LinearPredictor::new(p, coeffs)
}

/// Per-channel diagnostic of a fitted predictor on its own fitting data.
#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    /// Residual energy divided by signal energy, per channel.
    pub energy_ratio: Vec<f64>,
}

pub fn fit_diagnostics(lp: &LinearPredictor, controls: &[&Recording]) -> Result<FitDiagnostics> {
    let energy_ratio = (0..NUM_CHANNELS)
        .map(|c| {
            let x = build_fitting_signal(controls, c, lp.order())?;
            let e = residual_signal(&lp.channel_f64(c), &x);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ee: f64 = e.iter().map(|v| v * v).sum();
            Ok(if ex > 0.0 { ee / ex } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(FitDiagnostics { energy_ratio })
}
