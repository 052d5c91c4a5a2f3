//! Validation split strategies, subject leakage and fold manifests.

use lpgnet::dsp::make_windows;
use lpgnet::gait::synthesize_dataset;
use lpgnet::splits::{holdout_subjects, split_windows, stratified_kfold, FoldPlan, SplitStrategy};
use lpgnet::SyntheticSpec;

fn main() -> lpgnet::Result<()> {
    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 10,
        walks_per_subject: 2,
        duration_s: 20.0,
        ..SyntheticSpec::default()
    })?;
    let mut windows = Vec::new();
    for r in &ds.recordings {
        windows.extend(make_windows(r, 100, 50)?);
    }

    let (train, test) = holdout_subjects(&ds.subjects(), 0.2, 1)?;
    println!("holdout: {} train subjects, {} test subjects", train.len(), test.len());

    for strategy in SplitStrategy::ALL {
        let plan = split_windows(&windows, strategy, 0.1, 2)?;
        println!(
            "{strategy:<18} {} train / {} validation windows, {} subjects on both sides",
            plan.train.len(),
            plan.validation.len(),
            plan.subject_overlap().len()
        );
    }

    let folds = stratified_kfold(&ds.subjects(), 5, 3)?;
    for (i, (pd, co)) in folds.stratification().into_iter().enumerate() {
        println!("fold {i}: {pd} PD, {co} control");
    }
    let manifest = folds.to_manifest();
    assert_eq!(FoldPlan::from_manifest(&manifest)?, folds);
    println!("{}", manifest.lines().take(6).collect::<Vec<_>>().join("\n"));
    Ok(())
}
