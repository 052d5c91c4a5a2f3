use super::Real;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy against label-smoothed targets
/// `y~ = y (1 - eps) + eps / 2`, averaged over the batch.
///
/// Returns the loss and its gradient with respect to each probability. The
/// gradient is zero where the clamp is active.
pub fn bce_smoothed<T: Real>(probs: &[T], labels: &[T], eps: f64) -> (f64, Vec<T>) {
    assert_eq!(probs.len(), labels.len(), "probabilities and labels differ in length");
    assert!(!probs.is_empty(), "empty batch");
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let raw = p.f64();
            let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let target = y.f64() * (1.0 - eps) + eps / 2.0;
            loss -= target * p.ln() + (1.0 - target) * (1.0 - p).ln();
            if raw == p {
                T::of((-(target / p) + (1.0 - target) / (1.0 - p)) / n)
            } else {
                T::zero()
            }
        })
        .collect();
    (loss / n, grad)
}

/// Loss-only convenience for `f64` slices.
pub fn bce_smoothed_f64(probs: &[f64], labels: &[f64], eps: f64) -> f64 {
    bce_smoothed(probs, labels, eps).0
}
