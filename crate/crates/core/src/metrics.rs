//! Classification metrics and fold aggregation. PD is the positive class.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.n() as f64
    }

    /// `2tp / (2tp + fp + fn)`, or 0 when the denominator vanishes.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

fn check_lengths(probs: &[f64], labels: &[bool]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Confusion counts with `prob >= threshold` predicted positive.
pub fn confusion(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_lengths(probs, labels)?;
    let mut c = Confusion::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Accuracy and F1 at `threshold`, with the confusion counts.
pub fn accuracy_f1(probs: &[f64], labels: &[bool], threshold: f64) -> Result<(f64, f64, Confusion)> {
    let c = confusion(probs, labels, threshold)?;
    Ok((c.accuracy(), c.f1(), c))
}

/// Area under the ROC curve in its Mann-Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(probs, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // Walk tie groups in ascending score order, counting negatives seen so far.
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| labels[k]).count();
        let neg = group.len() - pos;
        wins += pos as f64 * (neg_below as f64 + 0.5 * neg as f64);
        neg_below += neg;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Metrics for one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub loss: f64,
    pub confusion: Confusion,
}

impl EvalResult {
    /// Evaluates probabilities against labels; `loss` is supplied by the caller.
    pub fn compute(probs: &[f64], labels: &[bool], loss: f64) -> Result<Self> {
        let (accuracy, f1, confusion) = accuracy_f1(probs, labels, THRESHOLD)?;
        let auc = match auc(probs, labels) {
            Ok(v) => Some(v),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            n: probs.len(),
            accuracy,
            f1,
            auc,
            loss,
            confusion,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }

    fn scaled(self, k: f64) -> Self {
        Self {
            mean: self.mean * k,
            std: self.std * k,
        }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1} ± {:.1}", self.mean, self.std)
    }
}

/// Per-fold results with their aggregate. Accuracy, AUC and F1 summaries are
/// percentages; the loss summary is unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub folds: Vec<EvalResult>,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
    pub f1: MeanStd,
    pub loss: MeanStd,
    pub strategy: String,
    pub seed: u64,
    pub config_hash: String,
}

/// Aggregates fold results. Folds without an AUC are left out of the AUC
/// summary.
pub fn aggregate_folds(
    folds: Vec<EvalResult>,
    strategy: impl Into<String>,
    seed: u64,
    config_hash: impl Into<String>,
) -> Result<FoldReport> {
    if folds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let col = |f: fn(&EvalResult) -> f64| folds.iter().map(f).collect::<Vec<_>>();
    let aucs: Vec<f64> = folds.iter().filter_map(|r| r.auc).collect();
    Ok(FoldReport {
        accuracy: MeanStd::of(&col(|r| r.accuracy)).expect("nonempty").scaled(100.0),
        auc: MeanStd::of(&aucs).unwrap_or(MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        })
        .scaled(100.0),
        f1: MeanStd::of(&col(|r| r.f1)).expect("nonempty").scaled(100.0),
        loss: MeanStd::of(&col(|r| r.loss)).expect("nonempty"),
        folds,
        strategy: strategy.into(),
        seed,
        config_hash: config_hash.into(),
    })
}

impl FoldReport {
    /// CSV with one row per fold (fractions) followed by `mean` and `std`
    /// rows (percentages, loss unscaled).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["fold", "n", "accuracy", "auc", "f1", "loss"]).map_err(csv_err)?;
        for (i, r) in self.folds.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.n.to_string(),
                fmt(Some(r.accuracy)),
                fmt(r.auc),
                fmt(Some(r.f1)),
                fmt(Some(r.loss)),
            ])
            .map_err(csv_err)?;
        }
        let n: usize = self.folds.iter().map(|r| r.n).sum();
        for (name, pick) in [("mean", (|m: MeanStd| m.mean) as fn(MeanStd) -> f64), ("std", |m: MeanStd| m.std)] {
            w.write_record([
                name.to_string(),
                n.to_string(),
                fmt(Some(pick(self.accuracy))),
                fmt(Some(pick(self.auc))),
                fmt(Some(pick(self.f1))),
                fmt(Some(pick(self.loss))),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}

impl std::fmt::Display for FoldReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} folds ({})", self.folds.len(), self.strategy)?;
        writeln!(f, "  accuracy {}", self.accuracy)?;
        writeln!(f, "  auc      {}", self.auc)?;
        writeln!(f, "  f1       {}", self.f1)?;
        write!(f, "  loss     {:.4} ± {:.4}", self.loss.mean, self.loss.std)
    }
}
