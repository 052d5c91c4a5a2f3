//! Synthetic pseudo-gait datasets for running the whole pipeline without the
//! public recordings.
//!
//! Each sensor channel is a half-wave rectified stride oscillation (left foot
//! and right foot in antiphase) on top of a per-channel force offset, plus a
//! stable AR process driven by white noise. The per-foot totals are the sums
//! of their eight sensors. PD subjects get sharper AR resonances, more AR
//! noise and more irregular strides, all scaled by `class_separation`.
//! Per-subject random effects (offsets, stride gain and rate, resonance
//! frequencies, phases) scaled by `subject_variability` make subjects
//! individually recognisable without carrying class information, which is
//! what leaky split strategies exploit.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Group, Recording, RecordingKey, Study, SubjectId};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::NUM_CHANNELS;

const MAX_POLE_RADIUS: f64 = 0.95;
const SENSORS_PER_FOOT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_subjects_per_class: usize,
    pub walks_per_subject: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub ar_order: usize,
    /// 0 makes the classes statistically identical, 1 is an easy task.
    pub class_separation: f64,
    /// Scale of the per-subject random effects; 0 disables them.
    pub subject_variability: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_subjects_per_class: 10,
            walks_per_subject: 2,
            duration_s: 30.0,
            sample_rate_hz: 100.0,
            ar_order: 4,
            class_separation: 1.0,
            subject_variability: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn samples_per_walk(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_subjects_per_class == 0 || self.walks_per_subject == 0 || self.ar_order == 0 {
            return bad("counts and AR order must be at least 1");
        }
        if self.n_subjects_per_class > 3 * 99 || self.walks_per_subject > 99 {
            return bad("at most 297 subjects per class and 99 walks per subject");
        }
        if !(self.sample_rate_hz > 0.0 && self.duration_s > 0.0) {
            return bad("duration and sample rate must be positive");
        }
        let n = self.samples_per_walk();
        if n == 0 || n < self.ar_order {
            return bad("duration x sample rate must cover the AR order");
        }
        if !(0.0..=1.0).contains(&self.class_separation) {
            return bad("class_separation must lie in [0, 1]");
        }
        if !(self.subject_variability >= 0.0 && self.subject_variability.is_finite()) {
            return bad("subject_variability must be non-negative");
        }
        Ok(())
    }
}

/// Stable all-pole filter described by its poles: complex pairs
/// `(radius, angle)` plus optional real poles.
#[derive(Debug, Clone)]
struct PoleSet {
    pairs: Vec<(f64, f64)>,
    reals: Vec<f64>,
}

impl PoleSet {
    fn is_stable(&self) -> bool {
        self.pairs
            .iter()
            .all(|&(r, a)| r.abs() < MAX_POLE_RADIUS && a > 0.02 && a < PI - 0.02)
            && self.reals.iter().all(|r| r.abs() < MAX_POLE_RADIUS)
    }

    /// Coefficients `a(1..p)` of `A(z) = 1 + sum a(i) z^-i` whose roots are
    /// the poles.
    fn coefficients(&self) -> Vec<f64> {
        let mut poly = vec![1.0];
        let mut mul = |factor: &[f64]| {
            let mut out = vec![0.0; poly.len() + factor.len() - 1];
            for (i, p) in poly.iter().enumerate() {
                for (j, f) in factor.iter().enumerate() {
                    out[i + j] += p * f;
                }
            }
            poly = out;
        };
        for &(r, a) in &self.pairs {
            mul(&[1.0, -2.0 * r * a.cos(), r * r]);
        }
        for &r in &self.reals {
            mul(&[1.0, -r]);
        }
        poly.split_off(1)
    }
}

struct ChannelBase {
    poles: PoleSet,
    offset: f64,
    stride_gain: f64,
    phase: f64,
}

struct SubjectModel {
    id: SubjectId,
    stride_hz: f64,
    phase_jitter: f64,
    channels: Vec<ChannelModel>,
}

struct ChannelModel {
    ar: Vec<f64>,
    ar_scale: f64,
    offset: f64,
    stride_amp: f64,
    phase: f64,
}

fn normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

fn population(spec: &SyntheticSpec) -> Vec<ChannelBase> {
    let mut rng = seeded(derive_seed(spec.seed, 0));
    // Resonance angles are specified at 100 Hz and rescaled to the sample rate.
    let rate_scale = 100.0 / spec.sample_rate_hz;
    (0..2 * SENSORS_PER_FOOT)
        .map(|_| {
            let pairs = (0..spec.ar_order / 2)
                .map(|_| {
                    let r = rng.random_range(0.55..0.85);
                    let a = (rng.random_range(0.15..1.2) * rate_scale).min(PI - 0.3);
                    (r, a)
                })
                .collect();
            let reals = (0..spec.ar_order % 2)
                .map(|_| rng.random_range(0.3..0.8))
                .collect();
            ChannelBase {
                poles: PoleSet { pairs, reals },
                offset: rng.random_range(20.0..120.0),
                stride_gain: rng.random_range(0.6..1.4),
                phase: rng.random_range(0.0..0.8),
            }
        })
        .collect()
}

/// Impulse-response energy of `1 / A(z)`, i.e. the stationary variance of
/// the AR process under unit-variance innovations.
fn ar_variance(ar: &[f64]) -> f64 {
    let p = ar.len();
    let mut h = vec![0.0; 2000];
    for n in 0..h.len() {
        let mut v = if n == 0 { 1.0 } else { 0.0 };
        for i in 1..=p.min(n) {
            v -= ar[i - 1] * h[n - i];
        }
        h[n] = v;
    }
    h.iter().map(|v| v * v).sum()
}

fn subject_model(
    spec: &SyntheticSpec,
    base: &[ChannelBase],
    id: SubjectId,
    stream: u64,
) -> SubjectModel {
    let mut rng = seeded(derive_seed(spec.seed, stream));
    let sv = spec.subject_variability;
    let sep = if id.group == Group::Pt {
        spec.class_separation
    } else {
        0.0
    };
    let rate_scale = 100.0 / spec.sample_rate_hz;
    loop {
        let stride_hz = 0.95 * (0.08 * sv * normal(&mut rng)).exp();
        let mut channels = Vec::with_capacity(base.len());
        let mut stable = true;
        for b in base {
            let pairs: Vec<(f64, f64)> = b
                .poles
                .pairs
                .iter()
                .map(|&(r, a)| {
                    let r = r + 0.1 * sep;
                    let a = a + 0.1 * sv * normal(&mut rng) * rate_scale;
                    (r, a)
                })
                .collect();
            let reals = b
                .poles
                .reals
                .iter()
                .map(|&r| r + 0.03 * sv * normal(&mut rng))
                .collect();
            let poles = PoleSet { pairs, reals };
            if !poles.is_stable() {
                // unstable draw: start the subject over
                stable = false;
                break;
            }
            let ar = poles.coefficients();
            let offset = b.offset * (0.35 * sv * normal(&mut rng)).exp();
            let stride_amp =
                offset * b.stride_gain * (0.2 * sv * normal(&mut rng)).exp();
            let noise_amp = 0.15 * offset * (1.0 + 1.5 * sep);
            let ar_scale = noise_amp / ar_variance(&ar).sqrt();
            channels.push(ChannelModel {
                ar,
                ar_scale,
                offset,
                stride_amp,
                phase: b.phase + 0.1 * sv * normal(&mut rng),
            });
        }
        if stable {
            return SubjectModel {
                id,
                stride_hz,
                phase_jitter: 0.01 + 0.04 * sep,
                channels,
            };
        }
    }
}

fn synthesize_walk(spec: &SyntheticSpec, model: &SubjectModel, walk: u32, stream: u64) -> Result<Recording> {
    let mut rng = seeded(derive_seed(spec.seed, stream));
    let n = spec.samples_per_walk();
    let burn_in = 200;
    let dt = 1.0 / spec.sample_rate_hz;

    let mut phase = rng.random_range(0.0..2.0 * PI);
    let stride: Vec<f64> = (0..n)
        .map(|_| {
            let p = phase;
            phase += 2.0 * PI * model.stride_hz * dt + model.phase_jitter * normal(&mut rng);
            p
        })
        .collect();

    let mut channels = Vec::with_capacity(NUM_CHANNELS);
    for (c, ch) in model.channels.iter().enumerate() {
        let foot_shift = if c < SENSORS_PER_FOOT { 0.0 } else { PI };
        let p = ch.ar.len();
        let mut hist = vec![0.0; p];
        let mut out = Vec::with_capacity(n);
        for k in 0..n + burn_in {
            let mut v = normal(&mut rng);
            for (a, h) in ch.ar.iter().zip(&hist) {
                v -= a * h;
            }
            hist.rotate_right(1);
            if p > 0 {
                hist[0] = v;
            }
            if k >= burn_in {
                let t = k - burn_in;
                let s = (stride[t] + foot_shift + ch.phase).sin().max(0.0);
                out.push(ch.offset + ch.stride_amp * s + ch.ar_scale * v);
            }
        }
        channels.push(out);
    }
    for foot in 0..2 {
        let total: Vec<f64> = (0..n)
            .map(|t| {
                channels[foot * SENSORS_PER_FOOT..(foot + 1) * SENSORS_PER_FOOT]
                    .iter()
                    .map(|c| c[t])
                    .sum()
            })
            .collect();
        channels.push(total);
    }
    Recording::uniform(
        RecordingKey {
            subject: model.id,
            walk,
        },
        spec.sample_rate_hz,
        channels,
    )
}

fn subject_id(group: Group, index: usize) -> SubjectId {
    let study = [Study::Ga, Study::Ju, Study::Si][index / 99];
    SubjectId::new(study, group, (index % 99) as u32 + 1)
}

/// Generates a dataset; a pure function of `spec`.
pub fn synthesize_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let base = population(spec);
    let mut recordings = Vec::new();
    for (g, group) in [Group::Pt, Group::Co].into_iter().enumerate() {
        for s in 0..spec.n_subjects_per_class {
            let stream = 100 + (g * 1000 + s) as u64;
            let model = subject_model(spec, &base, subject_id(group, s), stream);
            for w in 0..spec.walks_per_subject {
                let walk_stream = 1_000_000 + stream * 100 + w as u64;
                recordings.push(synthesize_walk(spec, &model, w as u32 + 1, walk_stream)?);
            }
        }
    }
    Dataset::new(recordings, format!("synthetic {spec:?}"))
}
