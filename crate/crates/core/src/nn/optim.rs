//! Adam, gradient conditioning and learning-rate / stopping schedules.

use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

/// Adam moments for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[&Tensor<T>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update using the gradients stored on `params`.
pub fn adam_step<T: Real>(params: &mut [&mut Tensor<T>], state: &mut AdamState<T>, lr: f64) {
    assert_eq!(params.len(), state.m.len(), "optimizer state does not match parameters");
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let (data, grad) = p.data_and_grad_mut();
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..data.len() {
            let g = grad[i].f64();
            let mi = b1 * m[i].f64() + (1.0 - b1) * g;
            let vi = b2 * v[i].f64() + (1.0 - b2) * g * g;
            m[i] = T::of(mi);
            v[i] = T::of(vi);
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + state.eps);
            data[i] = T::of(data[i].f64() - update);
        }
    }
}

/// Adds `lambda * theta` to every gradient.
pub fn l2_penalty<T: Real>(params: &mut [&mut Tensor<T>], lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    let l = T::of(lambda);
    for p in params.iter_mut() {
        let (data, grad) = p.data_and_grad_mut();
        for (g, &w) in grad.iter_mut().zip(data.iter()) {
            *g += l * w;
        }
    }
}

/// Rescales all gradients by `max_norm / ||g||` when the global L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(params: &mut [&mut Tensor<T>], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(|p| p.grad())
        .flatten()
        .map(|g| g.f64() * g.f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = T::of(max_norm / norm);
        for p in params.iter_mut() {
            p.grad_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// Direction in which a monitored metric improves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValAccuracy,
    ValLoss,
}

impl Monitor {
    pub fn improves(self, value: f64, best: f64, min_delta: f64) -> bool {
        match self {
            Monitor::ValAccuracy => value > best + min_delta,
            Monitor::ValLoss => value < best - min_delta,
        }
    }

    pub fn worst(self) -> f64 {
        match self {
            Monitor::ValAccuracy => f64::NEG_INFINITY,
            Monitor::ValLoss => f64::INFINITY,
        }
    }
}

/// Divides the learning rate by `factor` once the metric has failed to
/// improve by `min_delta` for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub monitor: Monitor,
    pub patience: usize,
    pub factor: f64,
    pub min_delta: f64,
    pub min_lr: f64,
    best: f64,
    wait: usize,
    lr: f64,
}

impl PlateauScheduler {
    pub fn new(monitor: Monitor, lr: f64, patience: usize, factor: f64, min_delta: f64, min_lr: f64) -> Self {
        assert!(factor > 1.0, "plateau factor divides the learning rate and must exceed 1");
        Self {
            monitor,
            patience,
            factor,
            min_delta,
            min_lr,
            best: monitor.worst(),
            wait: 0,
            lr,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's metric; returns the learning rate for the next epoch.
    pub fn step(&mut self, value: f64) -> f64 {
        if self.monitor.improves(value, self.best, self.min_delta) {
            self.best = value;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr / self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Learning rate after replaying `history` through a [`PlateauScheduler`].
pub fn plateau_schedule(history: &[f64], monitor: Monitor, lr: f64, patience: usize, factor: f64) -> f64 {
    let mut s = PlateauScheduler::new(monitor, lr, patience, factor, 1e-4, 0.0);
    for &v in history {
        s.step(v);
    }
    s.lr()
}

/// Index of the best epoch in `history` (first one on ties).
pub fn best_epoch(history: &[f64], monitor: Monitor) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| monitor.improves(v, history[b], 0.0)) {
            best = Some(i);
        }
    }
    best
}

/// Tracks the best epoch and signals a stop after `patience` epochs without
/// improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    monitor: Monitor,
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(monitor: Monitor, patience: usize) -> Self {
        Self {
            monitor,
            patience,
            best: monitor.worst(),
            best_epoch: None,
            wait: 0,
        }
    }

    /// Returns true when `value` is a new best.
    pub fn update(&mut self, epoch: usize, value: f64) -> bool {
        if self.monitor.improves(value, self.best, 0.0) {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.wait = 0;
            true
        } else {
            self.wait += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.wait >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step() {
        let mut p = Tensor::<f64>::param(&[1], vec![0.0]);
        p.grad_mut()[0] = 1.0;
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &mut st, 1e-3);
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-15);
        assert!((p.data()[0] + 9.99999e-4).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_only_decays_moments() {
        let mut p = Tensor::<f64>::param(&[2], vec![0.5, -0.5]);
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &mut st, 1e-3);
        assert_eq!(p.data(), &[0.5, -0.5]);
        assert_eq!(st.m[0], vec![0.0, 0.0]);
        st.m[0] = vec![0.2, 0.2];
        st.v[0] = vec![0.1, 0.1];
        adam_step(&mut [&mut p], &mut st, 0.0);
        assert!((st.m[0][0] - 0.9 * 0.2).abs() < 1e-15);
        assert!((st.v[0][0] - 0.999 * 0.1).abs() < 1e-15);
        assert_eq!(p.data(), &[0.5, -0.5]);
    }

    #[test]
    fn l2_and_clipping() {
        let mut p = Tensor::<f64>::param(&[2], vec![2.0, -4.0]);
        l2_penalty(&mut [&mut p], 0.5);
        assert_eq!(p.grad().unwrap(), &[1.0, -2.0]);
        p.grad_mut().copy_from_slice(&[3.0, 4.0]);
        let norm = clip_global_norm(&mut [&mut p], 1.0);
        assert_eq!(norm, 5.0);
        let g = p.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        clip_global_norm(&mut [&mut p], 10.0);
        assert!((p.grad().unwrap()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn plateau_divides_by_four() {
        let lr = plateau_schedule(&[0.5, 0.5, 0.5], Monitor::ValAccuracy, 1e-3, 2, 4.0);
        assert!((lr - 2.5e-4).abs() < 1e-18);
        let lr = plateau_schedule(&[0.5, 0.6, 0.7], Monitor::ValAccuracy, 1e-3, 2, 4.0);
        assert_eq!(lr, 1e-3);
    }

    #[test]
    fn early_stopping_tracks_best() {
        assert_eq!(best_epoch(&[0.3, 0.2, 0.25, 0.2], Monitor::ValLoss), Some(1));
        assert_eq!(best_epoch(&[0.6, 0.8, 0.8, 0.7], Monitor::ValAccuracy), Some(1));
        let mut es = EarlyStopping::new(Monitor::ValLoss, 2);
        assert!(es.update(0, 1.0));
        assert!(!es.update(1, 1.0));
        assert!(!es.should_stop());
        assert!(!es.update(2, 1.5));
        assert!(es.should_stop());
        assert_eq!(es.best_epoch(), Some(0));
    }
}
