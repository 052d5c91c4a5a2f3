//! Stage-1 training of LPGNet on residual windows, with a subject-level
//! validation split.

use lpgnet::dsp::{make_windows, preprocess};
use lpgnet::gait::synthesize_dataset;
use lpgnet::linpred::fit_all_channels;
use lpgnet::metrics::EvalResult;
use lpgnet::models::{build_lpgnet, LpgnetDims};
use lpgnet::nn::{fit, predict, SampleSet, TrainConfig, WindowSet};
use lpgnet::rng::seeded;
use lpgnet::splits::{split_windows, SplitStrategy};
use lpgnet::{Label, Recording, SyntheticSpec, Variant};

fn main() -> lpgnet::Result<()> {
    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 10,
        walks_per_subject: 1,
        duration_s: 60.0,
        class_separation: 0.5,
        ..SyntheticSpec::default()
    })?;
    let pre = Variant::Lpgnet.preprocessing();
    let recs: Vec<Recording> = ds.recordings.iter().map(|r| preprocess(r, pre)).collect::<Result<_, _>>()?;
    let controls: Vec<&Recording> = recs.iter().filter(|r| r.label == Label::Control).collect();
    let lp = fit_all_channels(&controls, 11)?;

    let mut windows = Vec::new();
    for r in &recs {
        windows.extend(make_windows(&lp.residual(r)?.into_inner(), 100, 50)?);
    }
    let plan = split_windows(&windows, SplitStrategy::SubjectLevel, 0.2, 7)?;
    let (train_idx, val_idx) = plan.resolve(&windows)?;
    let train = WindowSet::subset(&windows, train_idx);
    let val = WindowSet::subset(&windows, val_idx);

    let spec = build_lpgnet(&LpgnetDims::default());
    let mut net = spec.build_network(&mut seeded(1))?;
    println!("{} windows, {} parameters", windows.len(), net.param_count());
    let cfg = TrainConfig {
        max_epochs: 15,
        ..TrainConfig::stage1()
    };
    let history = fit(&mut net, &train, Some(&val), &cfg)?;
    for e in &history.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  val loss {:.4}  val acc {:.3}  lr {:.1e}",
            e.epoch,
            e.train_loss,
            e.val_loss.unwrap_or(f64::NAN),
            e.val_accuracy.unwrap_or(f64::NAN),
            e.lr
        );
    }

    let probs: Vec<f64> = predict(&mut net, &val, 256)?.into_iter().map(f64::from).collect();
    let labels: Vec<bool> = (0..val.len()).map(|i| val.label(i) > 0.5).collect();
    let eval = EvalResult::compute(&probs, &labels, f64::NAN)?;
    println!(
        "best epoch {:?}: window accuracy {:.3}, AUC {:?}",
        history.best_epoch, eval.accuracy, eval.auc
    );
    Ok(())
}
