//! Mini-batch training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, bce_smoothed, clip_global_norm, l2_penalty, AdamState, EarlyStopping, Mode, Monitor, Network,
    PlateauScheduler, Tensor,
};
use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// A labelled collection of equally shaped samples.
pub trait SampleSet: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape of one sample, without the batch axis.
    fn sample_shape(&self) -> Vec<usize>;

    /// Writes sample `idx` into `out`, which holds exactly one sample.
    fn copy_into(&self, idx: usize, out: &mut [f32]);

    /// Target in {0, 1}.
    fn label(&self, idx: usize) -> f32;

    /// Stacks the given samples into a batch tensor and its targets.
    fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<f32>)> {
        let shape = self.sample_shape();
        let size: usize = shape.iter().product();
        let mut data = vec![0.0f32; indices.len() * size];
        for (chunk, &i) in data.chunks_mut(size).zip(indices) {
            self.copy_into(i, chunk);
        }
        let mut full = vec![indices.len()];
        full.extend(shape);
        let labels = indices.iter().map(|&i| self.label(i)).collect();
        Ok((Tensor::new(full, data)?, labels))
    }
}

/// Windows selected from a shared pool by index.
#[derive(Debug, Clone)]
pub struct WindowSet<'a> {
    windows: &'a [Window],
    indices: Vec<usize>,
}

impl<'a> WindowSet<'a> {
    pub fn new(windows: &'a [Window]) -> Self {
        Self::subset(windows, (0..windows.len()).collect())
    }

    pub fn subset(windows: &'a [Window], indices: Vec<usize>) -> Self {
        Self { windows, indices }
    }

    pub fn window(&self, idx: usize) -> &Window {
        &self.windows[self.indices[idx]]
    }
}

impl SampleSet for WindowSet<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.indices
            .first()
            .map(|&i| vec![self.windows[i].channels, self.windows[i].width])
            .unwrap_or_default()
    }

    fn copy_into(&self, idx: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.window(idx).data);
    }

    fn label(&self, idx: usize) -> f32 {
        self.window(idx).label.target()
    }
}

/// Fixed-length feature vectors, e.g. pooled activations of a frozen backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub features: Vec<f32>,
    pub labels: Vec<f32>,
}

impl FeatureSet {
    pub fn new(dim: usize, features: Vec<f32>, labels: Vec<f32>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} features cannot be split into {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { dim, features, labels })
    }
}

impl SampleSet for FeatureSet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![self.dim]
    }

    fn copy_into(&self, idx: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.features[idx * self.dim..][..self.dim]);
    }

    fn label(&self, idx: usize) -> f32 {
        self.labels[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub label_smoothing: f64,
    pub l2_lambda: f64,
    /// `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_min_delta: f64,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

impl TrainConfig {
    /// LPGNet window training.
    pub fn stage1() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 5e-4,
            label_smoothing: 0.1,
            l2_lambda: 1e-4,
            grad_clip_norm: Some(1.0),
            plateau_patience: 5,
            plateau_factor: 4.0,
            plateau_min_delta: 1e-4,
            min_lr: 1e-6,
            max_epochs: 200,
            early_stop_patience: 15,
            monitor: Monitor::ValLoss,
            seed: 0,
        }
    }

    /// Dense head retraining on whole recordings.
    pub fn stage2() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 100,
            ..Self::stage1()
        }
    }

    /// Baseline CNN of the leakage experiment.
    pub fn baseline() -> Self {
        Self {
            batch_size: 800,
            learning_rate: 1e-3,
            monitor: Monitor::ValAccuracy,
            ..Self::stage1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("training: {what}")));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.min_lr < 0.0 {
            return bad("learning rates must be positive");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 0.5)");
        }
        if self.l2_lambda < 0.0 || self.plateau_min_delta < 0.0 {
            return bad("l2_lambda and plateau_min_delta must be non-negative");
        }
        if self.grad_clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if self.plateau_factor.is_nan() || self.plateau_factor <= 1.0 {
            return bad("plateau_factor must exceed 1");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochLog> {
        self.epochs.get(self.best_epoch)
    }
}

fn accuracy(probs: &[f32], labels: &[f32]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    hits as f64 / probs.len().max(1) as f64
}

/// Eval-mode probabilities for every sample, in order.
pub fn predict(net: &mut Network<f32>, set: &dyn SampleSet, batch_size: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(set.len());
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, _) = set.batch(chunk)?;
        out.extend_from_slice(net.infer(x)?.data());
    }
    Ok(out)
}

fn evaluate(net: &mut Network<f32>, set: &dyn SampleSet, cfg: &TrainConfig) -> Result<(f64, f64)> {
    let probs = predict(net, set, cfg.batch_size)?;
    let labels: Vec<f32> = (0..set.len()).map(|i| set.label(i)).collect();
    let (loss, _) = bce_smoothed(&probs, &labels, cfg.label_smoothing);
    Ok((loss, accuracy(&probs, &labels)))
}

/// Trains `net` with Adam on smoothed BCE.
///
/// The monitored metric comes from `val` when given, otherwise from the
/// training epoch. The weights of the best epoch are restored before
/// returning.
pub fn fit(
    net: &mut Network<f32>,
    train: &dyn SampleSet,
    val: Option<&dyn SampleSet>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_some_and(|v| v.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let mut rng = seeded(cfg.seed);
    let mut adam = AdamState::new(&net.params());
    let mut sched = PlateauScheduler::new(
        cfg.monitor,
        cfg.learning_rate,
        cfg.plateau_patience,
        cfg.plateau_factor,
        cfg.plateau_min_delta,
        cfg.min_lr,
    );
    let mut stop = EarlyStopping::new(cfg.monitor, cfg.early_stop_patience);
    let mut best_state = net.state_arrays();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train.batch(chunk)?;
            net.zero_grad();
            let out = net.forward(x, Mode::Train, &mut rng)?;
            let probs = out.data();
            let (loss, grad) = bce_smoothed(probs, &labels, cfg.label_smoothing);
            if !loss.is_finite() {
                return Err(Error::Diverged { fold: None, epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            hits += accuracy(probs, &labels) * chunk.len() as f64;
            let grad = Tensor::new(out.shape().to_vec(), grad)?;
            net.backward(grad)?;
            let mut params = net.params_mut();
            l2_penalty(&mut params, cfg.l2_lambda);
            if let Some(c) = cfg.grad_clip_norm {
                clip_global_norm(&mut params, c);
            }
            adam_step(&mut params, &mut adam, lr);
        }
        net.clear_caches();
        if !net.is_finite() {
            return Err(Error::Diverged { fold: None, epoch });
        }
        let n = train.len() as f64;
        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let (l, a) = evaluate(net, v, cfg)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_accuracy: hits / n,
            val_loss,
            val_accuracy,
        };
        let metric = match cfg.monitor {
            Monitor::ValLoss => log.val_loss.unwrap_or(log.train_loss),
            Monitor::ValAccuracy => log.val_accuracy.unwrap_or(log.train_accuracy),
        };
        log::debug!(
            "epoch {epoch}: lr {lr:.2e} loss {:.4} acc {:.3} val {:?}/{:?}",
            log.train_loss,
            log.train_accuracy,
            log.val_loss,
            log.val_accuracy
        );
        history.epochs.push(log);
        if stop.update(epoch, metric) {
            best_state = net.state_arrays();
        }
        sched.step(metric);
        if stop.should_stop() {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = stop.best_epoch().unwrap_or(0);
    net.load_state_arrays(&best_state)?;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ActivationKind, LayerSpec};
    use rand::Rng;

    fn toy(seed: u64, n: usize) -> FeatureSet {
        let mut rng = seeded(seed);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 2) as f32;
            let sign = if y > 0.5 { 1.0 } else { -1.0 };
            feats.push(sign * rng.random_range(0.5f32..2.0));
            feats.push(rng.random_range(-1.0f32..1.0));
            labels.push(y);
        }
        FeatureSet::new(2, feats, labels).unwrap()
    }

    fn logistic(seed: u64) -> Network<f32> {
        let specs = [
            LayerSpec::Dense { input: 2, output: 1 },
            LayerSpec::Activation {
                kind: ActivationKind::Sigmoid,
            },
        ];
        Network::new(&specs, &mut seeded(seed)).unwrap()
    }

    #[test]
    fn separable_toy_problem_converges() {
        for seed in 0..5 {
            let data = toy(seed, 64);
            let cfg = TrainConfig {
                batch_size: 64,
                learning_rate: 0.05,
                max_epochs: 200,
                early_stop_patience: 200,
                plateau_patience: 200,
                l2_lambda: 0.0,
                grad_clip_norm: None,
                seed,
                ..TrainConfig::stage1()
            };
            let mut net = logistic(seed);
            let hist = fit(&mut net, &data, None, &cfg).unwrap();
            assert_eq!(hist.epochs.len(), 200);
            let probs = predict(&mut net, &data, 64).unwrap();
            let (loss, _) = bce_smoothed(&probs, &data.labels, 0.1);
            assert!(loss < 0.3, "seed {seed}: loss {loss}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy(3, 50);
        let cfg = TrainConfig {
            batch_size: 8,
            max_epochs: 5,
            seed: 9,
            ..TrainConfig::stage1()
        };
        let run = || {
            let mut net = logistic(1);
            let h = fit(&mut net, &data, Some(&data), &cfg).unwrap();
            (h, net.state_arrays())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn restores_best_weights() {
        let data = toy(4, 40);
        let cfg = TrainConfig {
            batch_size: 40,
            learning_rate: 0.5,
            max_epochs: 30,
            seed: 2,
            ..TrainConfig::stage1()
        };
        let mut net = logistic(0);
        let hist = fit(&mut net, &data, Some(&data), &cfg).unwrap();
        let (loss, _) = evaluate(&mut net, &data, &cfg).unwrap();
        let best = hist.best().unwrap().val_loss.unwrap();
        assert!((loss - best).abs() < 1e-9, "{loss} vs {best}");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            label_smoothing: 0.5,
            ..TrainConfig::stage1()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            plateau_factor: 1.0,
            ..TrainConfig::stage1()
        };
        assert!(cfg.validate().is_err());
    }
}
