//! Subject-level k-fold evaluation of the three model variants.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::report::{RunReport, StageLog};
use super::{ensure_dir, preprocess_all, ExperimentConfig};
use crate::dsp::{make_windows, Window};
use crate::error::{Error, Result};
use crate::gait::{Dataset, Label, Recording, RecordingKey, SubjectId};
use crate::linpred::{fit_all_channels, fit_diagnostics, LinearPredictor};
use crate::metrics::{aggregate_folds, EvalResult, FoldReport};
use crate::models::{predict_recording, BaselineDims, ModelBundle, ModelSpec, Variant};
use crate::nn::{bce_smoothed, fit, FeatureSet, Network, Tensor, TrainConfig, WindowSet};
use crate::rng::{derive_seed, seeded, streams};
use crate::splits::{holdout_subjects, stratified_kfold, verify_no_subject_leakage, FoldPlan};

#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub test_subjects: Vec<SubjectId>,
    pub train_subjects: usize,
    pub inner_val_subjects: Vec<SubjectId>,
    pub eval: EvalResult,
    /// `(recording, probability, is_pd)` for every test recording.
    pub predictions: Vec<(RecordingKey, f64, bool)>,
    pub stage1: StageLog,
    pub stage2: Option<StageLog>,
    /// Residual-to-signal energy per channel on the fold's fitting data.
    pub lp_energy_ratio: Option<Vec<f64>>,
    /// Whether head retraining left the backbone bit-identical.
    pub backbone_frozen: Option<bool>,
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossvalOutcome {
    pub variant: Variant,
    pub cnn_params: usize,
    pub lp_coefficients: usize,
    pub fold_manifest: String,
    pub folds: Vec<FoldOutcome>,
    pub report: FoldReport,
}

fn spec_for(cfg: &ExperimentConfig, variant: Variant) -> ModelSpec {
    let baseline = BaselineDims {
        input_len: cfg.model.baseline.input_len,
        ..cfg.model.baseline
    };
    variant.spec(&cfg.model.lpgnet, &baseline)
}

fn window_len(spec: &ModelSpec, variant: Variant) -> usize {
    spec.input_len.unwrap_or(variant.window_len())
}

fn recording_tensor(rec: &Recording) -> Result<Tensor<f32>> {
    let data = rec.channels.iter().flatten().map(|&v| v as f32).collect();
    Tensor::new(vec![1, rec.channels.len(), rec.len()], data)
}

/// Pooled backbone activations of whole recordings.
fn pooled_features(backbone: &mut Network<f32>, recs: &[&Recording]) -> Result<FeatureSet> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for r in recs {
        let out = backbone.infer(recording_tensor(r)?)?;
        dim = out.numel();
        features.extend_from_slice(out.data());
        labels.push(r.label.target());
    }
    FeatureSet::new(dim, features, labels)
}

struct FoldInput<'a> {
    cfg: &'a ExperimentConfig,
    ds: &'a Dataset,
    pre: &'a [Recording],
    plan: &'a FoldPlan,
    variant: Variant,
    out_dir: Option<&'a Path>,
}

fn run_fold(input: &FoldInput<'_>, fold: usize) -> Result<FoldOutcome> {
    let FoldInput {
        cfg,
        ds,
        pre,
        plan,
        variant,
        out_dir,
    } = *input;
    let seed = derive_seed(cfg.seed, streams::FOLD_BASE + fold as u64);
    let test = plan.test_subjects(fold);
    let train = plan.train_subjects(fold);
    let leaked = verify_no_subject_leakage(train.iter().copied(), test.iter().copied());
    if !leaked.is_empty() {
        return Err(Error::ContractViolation(format!("fold {fold}: subjects {leaked:?} on both sides")));
    }

    let train_labels: Vec<(SubjectId, Label)> = train.iter().map(|s| (*s, s.label())).collect();
    let (inner_train, inner_val) =
        holdout_subjects(&train_labels, cfg.crossval.inner_val_fraction, derive_seed(seed, streams::SPLIT))?;
    let train_idx: Vec<usize> = (0..pre.len()).filter(|&i| train.contains(&pre[i].subject)).collect();

    let (predictor, lp_energy_ratio) = if variant.uses_predictor() {
        let controls: Vec<&Recording> = train_idx
            .iter()
            .map(|&i| &pre[i])
            .filter(|r| r.label == Label::Control)
            .collect();
        let fitted: BTreeSet<SubjectId> = controls.iter().map(|r| r.subject).collect();
        if !verify_no_subject_leakage(fitted, test.iter().copied()).is_empty() {
            return Err(Error::ContractViolation(format!("fold {fold}: predictor saw test subjects")));
        }
        let lp = fit_all_channels(&controls, cfg.lp_order)?;
        let diag = fit_diagnostics(&lp, &controls)?;
        (Some(lp), Some(diag.energy_ratio))
    } else {
        (None, None)
    };
    let inputs: Vec<Recording> = train_idx
        .iter()
        .map(|&i| match &predictor {
            Some(lp) => lp.residual(&pre[i]).map(|r| r.into_inner()),
            None => Ok(pre[i].clone()),
        })
        .collect::<Result<_>>()?;

    let spec = spec_for(cfg, variant);
    let len = window_len(&spec, variant);
    let stride = ((len as f64 * cfg.crossval.stride_fraction).round() as usize).max(1);
    let mut windows: Vec<Window> = Vec::new();
    for r in &inputs {
        windows.extend(make_windows(r, len, stride)?);
    }
    let (tr, va): (Vec<usize>, Vec<usize>) =
        (0..windows.len()).partition(|&i| inner_train.contains(&windows[i].source.subject));
    debug_assert!(va.iter().all(|&i| inner_val.contains(&windows[i].source.subject)));

    let mut net = spec.build_network(&mut seeded(derive_seed(seed, streams::INIT)))?;
    let stage1_cfg = TrainConfig {
        seed: derive_seed(seed, streams::TRAIN),
        ..if variant == Variant::Baseline {
            cfg.crossval.baseline.clone()
        } else {
            cfg.crossval.stage1.clone()
        }
    };
    let history = fit(
        &mut net,
        &WindowSet::subset(&windows, tr),
        Some(&WindowSet::subset(&windows, va)),
        &stage1_cfg,
    )
    .map_err(|e| e.in_fold(fold))?;
    let stage1 = StageLog {
        name: format!("{variant}/fold{fold}/stage1"),
        seed: stage1_cfg.seed,
        history,
    };
    drop(windows);

    let (stage2, backbone_frozen) = if variant.full_recording() {
        let at = spec
            .head_start()
            .ok_or_else(|| Error::Config(format!("{} has no pooling layer", spec.name)))?;
        let (mut backbone, mut head) = net.split_at(at);
        let before = backbone.state_arrays();
        let pick = |set: &BTreeSet<SubjectId>| -> Vec<&Recording> { inputs.iter().filter(|r| set.contains(&r.subject)).collect() };
        let train_feats = pooled_features(&mut backbone, &pick(&inner_train))?;
        let val_feats = pooled_features(&mut backbone, &pick(&inner_val))?;
        let stage2_cfg = TrainConfig {
            seed: derive_seed(derive_seed(seed, streams::TRAIN), 2),
            ..cfg.crossval.stage2.clone()
        };
        let history = fit(&mut head, &train_feats, Some(&val_feats), &stage2_cfg).map_err(|e| e.in_fold(fold))?;
        let frozen = backbone.state_arrays() == before;
        net = backbone.join(head);
        (
            Some(StageLog {
                name: format!("{variant}/fold{fold}/stage2"),
                seed: stage2_cfg.seed,
                history,
            }),
            Some(frozen),
        )
    } else {
        (None, None)
    };

    let mut bundle = ModelBundle::new(variant, spec, net, predictor, cfg.hash())?;
    bundle.preprocessing = variant.preprocessing().with_zero_mean(cfg.zero_mean);
    let mut predictions = Vec::new();
    for r in ds.recordings.iter().filter(|r| test.contains(&r.subject)) {
        let p = predict_recording(&mut bundle, r)?;
        predictions.push((r.key(), p.probability, r.label.is_pd()));
    }
    let probs: Vec<f64> = predictions.iter().map(|p| p.1).collect();
    let labels: Vec<bool> = predictions.iter().map(|p| p.2).collect();
    let targets: Vec<f64> = labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    let (loss, _) = bce_smoothed(&probs, &targets, 0.0);
    let eval = EvalResult::compute(&probs, &labels, loss)?;
    log::info!(
        "{variant} fold {fold}: accuracy {:.3} auc {:?} f1 {:.3}",
        eval.accuracy,
        eval.auc,
        eval.f1
    );

    let bundle_path = match out_dir {
        Some(dir) if cfg.crossval.save_bundles => {
            let path = dir.join(format!("{variant}_fold{fold}.bundle"));
            bundle.save(&path)?;
            Some(path)
        }
        _ => None,
    };
    Ok(FoldOutcome {
        fold,
        seed,
        test_subjects: test.iter().copied().collect(),
        train_subjects: train.len(),
        inner_val_subjects: inner_val.into_iter().collect(),
        eval,
        predictions,
        stage1,
        stage2,
        lp_energy_ratio,
        backbone_frozen,
        bundle: bundle_path,
    })
}

/// Stratified subject-level k-fold cross-validation of `variant` on `ds`.
///
/// Within each fold only training subjects feed the predictor fit, the
/// window classifier and the head retraining; a class-stratified subset of
/// them is held out to monitor training. Test recordings are classified
/// whole through the same path as deployment.
pub fn run_crossval(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    variant: Variant,
    out_dir: Option<&Path>,
) -> Result<(CrossvalOutcome, RunReport)> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut report = RunReport::new(&format!("crossval-{variant}"), cfg);
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    let folds_seed = derive_seed(cfg.seed, streams::FOLDS);
    let plan = stratified_kfold(&ds.subjects(), cfg.crossval.folds, folds_seed)?;
    report.seeds.insert("folds".into(), folds_seed);
    let pre = preprocess_all(&ds.recordings, variant.preprocessing().with_zero_mean(cfg.zero_mean))?;
    let input = FoldInput {
        cfg,
        ds,
        pre: &pre,
        plan: &plan,
        variant,
        out_dir,
    };
    let folds: Vec<FoldOutcome> = if cfg.crossval.parallel_folds {
        (0..plan.k).into_par_iter().map(|f| run_fold(&input, f)).collect::<Result<_>>()?
    } else {
        (0..plan.k).map(|f| run_fold(&input, f)).collect::<Result<_>>()?
    };
    let fold_report = aggregate_folds(
        folds.iter().map(|f| f.eval.clone()).collect(),
        format!("{variant}/subject-{}-fold", plan.k),
        cfg.seed,
        cfg.hash(),
    )?;
    for f in &folds {
        report.seeds.insert(format!("fold{}", f.fold), f.seed);
        report.stages.push(f.stage1.clone());
        report.stages.extend(f.stage2.clone());
        report.artifacts.extend(f.bundle.clone());
    }
    let spec = spec_for(cfg, variant);
    let outcome = CrossvalOutcome {
        variant,
        cnn_params: crate::models::count_params(&spec),
        lp_coefficients: if variant.uses_predictor() {
            LinearPredictor::zeros(cfg.lp_order).total_coefficients()
        } else {
            0
        },
        fold_manifest: plan.to_manifest(),
        folds,
        report: fold_report,
    };
    report.timings_s.insert("total".into(), started.elapsed().as_secs_f64());
    if let Some(dir) = out_dir {
        let csv_path = dir.join(format!("crossval_{variant}.csv"));
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        outcome.report.write_csv(file)?;
        let folds_path = dir.join(format!("folds_{variant}.csv"));
        std::fs::write(&folds_path, &outcome.fold_manifest).map_err(|e| Error::io(&folds_path, e))?;
        report.artifacts.push(csv_path);
        report.artifacts.push(folds_path);
    }
    report.set_result(&outcome)?;
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok((outcome, report))
}
