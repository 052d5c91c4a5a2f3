//! How the choice of validation split inflates validation accuracy.
//!
//! A subject-level test set is held out, the remaining windows are split
//! into training and validation by each strategy, and the baseline CNN is
//! trained from the same initial weights for each. The gap between
//! validation and test accuracy measures how much the validation set leaks.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use super::report::{RunReport, StageLog};
use super::{ensure_dir, preprocess_all, ExperimentConfig};
use crate::dsp::{make_windows, PreprocessConfig, Window};
use crate::error::{Error, Result};
use crate::gait::{Dataset, Label, SubjectId};
use crate::models::build_baseline;
use crate::nn::{bce_smoothed, fit, predict, Network, SampleSet, TrainConfig, WindowSet};
use crate::rng::{derive_seed, seeded, streams};
use crate::splits::{holdout_subjects, split_refs, SplitStrategy, WindowRef};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyResult {
    pub strategy: SplitStrategy,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Subjects with windows on both sides of the train/validation split.
    pub overlapping_subjects: usize,
    pub best_epoch: usize,
}

impl StrategyResult {
    /// Validation minus test accuracy, in percentage points.
    pub fn gap(&self) -> f64 {
        100.0 * (self.val_accuracy - self.test_accuracy)
    }

    /// Validation minus test loss.
    pub fn loss_gap(&self) -> f64 {
        self.val_loss - self.test_loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageRepeat {
    pub seed: u64,
    pub test_subjects: Vec<SubjectId>,
    pub results: Vec<StrategyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub repeats: Vec<LeakageRepeat>,
}

impl LeakageReport {
    /// Mean accuracy gap per strategy over repeats.
    pub fn mean_gap(&self, strategy: SplitStrategy) -> f64 {
        let gaps: Vec<f64> = self
            .repeats
            .iter()
            .flat_map(|r| r.results.iter().filter(|s| s.strategy == strategy).map(StrategyResult::gap))
            .collect();
        gaps.iter().sum::<f64>() / gaps.len().max(1) as f64
    }

    /// CSV with one row per repeat and strategy.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "repeat,seed,strategy,train_acc,train_loss,val_acc,val_loss,test_acc,test_loss,gap_points,loss_gap\n",
        );
        for (i, r) in self.repeats.iter().enumerate() {
            for s in &r.results {
                out.push_str(&format!(
                    "{i},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2},{:.4}\n",
                    r.seed,
                    s.strategy,
                    s.train_accuracy,
                    s.train_loss,
                    s.val_accuracy,
                    s.val_loss,
                    s.test_accuracy,
                    s.test_loss,
                    s.gap(),
                    s.loss_gap()
                ));
            }
        }
        out
    }
}

impl std::fmt::Display for LeakageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<17} {:>9} {:>9} {:>9} {:>10}",
            "strategy", "train", "val", "test", "val-test"
        )?;
        for r in &self.repeats {
            for s in &r.results {
                writeln!(
                    f,
                    "{:<17} {:>9.1} {:>9.1} {:>9.1} {:>10.1}",
                    s.strategy.to_string(),
                    100.0 * s.train_accuracy,
                    100.0 * s.val_accuracy,
                    100.0 * s.test_accuracy,
                    s.gap()
                )?;
            }
        }
        Ok(())
    }
}

fn evaluate(net: &mut Network<f32>, set: &dyn SampleSet, cfg: &TrainConfig) -> Result<(f64, f64)> {
    let probs = predict(net, set, cfg.batch_size)?;
    let labels: Vec<f32> = (0..set.len()).map(|i| set.label(i)).collect();
    let (loss, _) = bce_smoothed(&probs, &labels, cfg.label_smoothing);
    let hits = probs.iter().zip(&labels).filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5)).count();
    Ok((hits as f64 / labels.len() as f64, loss))
}

fn windows_of(ds: &Dataset, pre: PreprocessConfig, len: usize, stride: usize) -> Result<Vec<Window>> {
    let recs = preprocess_all(&ds.recordings, pre)?;
    let mut out = Vec::new();
    for r in &recs {
        out.extend(make_windows(r, len, stride)?);
    }
    Ok(out)
}

fn run_once(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    windows: &[Window],
    seed: u64,
    report: &mut RunReport,
    out_dir: Option<&Path>,
) -> Result<LeakageRepeat> {
    let lc = &cfg.leakage;
    let (_, test) = holdout_subjects(&ds.subjects(), lc.holdout_fraction, derive_seed(seed, streams::HOLDOUT))?;
    let (test_idx, pool_idx): (Vec<usize>, Vec<usize>) =
        (0..windows.len()).partition(|&i| test.contains(&windows[i].source.subject));
    let pool: Vec<(WindowRef, Label)> = pool_idx
        .iter()
        .map(|&i| (WindowRef::of(&windows[i]), windows[i].label))
        .collect();
    let test_set = WindowSet::subset(windows, test_idx);
    if test_set.is_empty() || pool.is_empty() {
        return Err(Error::TooFewWindows("holdout left an empty side".into()));
    }
    let spec = build_baseline(&lc_dims(cfg));
    let init = derive_seed(seed, streams::INIT);
    let train_seed = derive_seed(seed, streams::TRAIN);
    let split_seed = derive_seed(seed, streams::SPLIT);
    let mut results = Vec::new();
    for strategy in SplitStrategy::ALL {
        let plan = split_refs(pool.clone(), strategy, lc.val_fraction, split_seed)?;
        if let Some(dir) = out_dir {
            let path = dir.join(format!("split_{seed}_{strategy}.csv"));
            std::fs::write(&path, plan.to_manifest()).map_err(|e| Error::io(&path, e))?;
            report.artifacts.push(path);
        }
        let (tr, va) = plan.resolve(windows)?;
        let train_set = WindowSet::subset(windows, tr);
        let val_set = WindowSet::subset(windows, va);
        let mut net = spec.build_network(&mut seeded(init))?;
        let tcfg = TrainConfig {
            seed: train_seed,
            ..lc.train.clone()
        };
        let history = fit(&mut net, &train_set, Some(&val_set), &tcfg)?;
        let (train_accuracy, train_loss) = evaluate(&mut net, &train_set, &tcfg)?;
        let (val_accuracy, val_loss) = evaluate(&mut net, &val_set, &tcfg)?;
        let (test_accuracy, test_loss) = evaluate(&mut net, &test_set, &tcfg)?;
        log::info!(
            "{strategy}: train {:.3} val {:.3} test {:.3}",
            train_accuracy,
            val_accuracy,
            test_accuracy
        );
        results.push(StrategyResult {
            strategy,
            train_windows: train_set.len(),
            val_windows: val_set.len(),
            test_windows: test_set.len(),
            train_accuracy,
            train_loss,
            val_accuracy,
            val_loss,
            test_accuracy,
            test_loss,
            overlapping_subjects: plan.subject_overlap().len(),
            best_epoch: history.best_epoch,
        });
        report.stages.push(StageLog {
            name: format!("baseline/{strategy}/seed{seed}"),
            seed: train_seed,
            history,
        });
    }
    report.seeds.insert(format!("repeat{seed}.init"), init);
    report.seeds.insert(format!("repeat{seed}.split"), split_seed);
    report.seeds.insert(format!("repeat{seed}.train"), train_seed);
    Ok(LeakageRepeat {
        seed,
        test_subjects: test.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
        results,
    })
}

fn lc_dims(cfg: &ExperimentConfig) -> crate::models::BaselineDims {
    crate::models::BaselineDims {
        input_len: cfg.leakage.window_len,
        ..cfg.model.baseline
    }
}

/// Runs the leakage study on `ds`. Repeat `r` uses master seed
/// `cfg.seed + r`; with `out_dir` the split manifests, a CSV summary and the
/// run report are written there.
pub fn run_leakage_experiment(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    out_dir: Option<&Path>,
) -> Result<(LeakageReport, RunReport)> {
    cfg.validate()?;
    let mut report = RunReport::new("leakage", cfg);
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    let started = std::time::Instant::now();
    let pre = PreprocessConfig::NORMALIZED.with_zero_mean(cfg.zero_mean);
    let windows = windows_of(ds, pre, cfg.leakage.window_len, cfg.leakage.stride)?;
    let mut repeats = Vec::new();
    for r in 0..cfg.leakage.repeats {
        let seed = cfg.seed.wrapping_add(r as u64);
        repeats.push(run_once(cfg, ds, &windows, seed, &mut report, out_dir)?);
    }
    let result = LeakageReport { repeats };
    report.set_result(&result)?;
    report.timings_s.insert("total".into(), started.elapsed().as_secs_f64());
    if let Some(dir) = out_dir {
        let path = dir.join("leakage.csv");
        std::fs::write(&path, result.to_csv()).map_err(|e| Error::io(&path, e))?;
        report.artifacts.push(path);
        report.write(dir)?;
    }
    Ok((result, report))
}
