//! Subject-level 10-fold cross-validation of one model variant.
//!
//! cargo run --release --example crossval -- [lpgnet|ablation|baseline]

use lpgnet::gait::synthesize_dataset;
use lpgnet::pipeline::{run_crossval, ExperimentConfig};
use lpgnet::Variant;

const CONFIG: &str = r#"
seed = 3
[data.synthetic]
n_subjects_per_class = 12
walks_per_subject = 1
duration_s = 40.0
class_separation = 0.6
[crossval.stage1]
max_epochs = 10
[crossval.stage2]
max_epochs = 10
[crossval.baseline]
max_epochs = 10
"#;

fn main() -> lpgnet::Result<()> {
    let variant: Variant = std::env::args().nth(1).as_deref().unwrap_or("lpgnet").parse()?;
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let ds = synthesize_dataset(&cfg.data.synthetic)?;
    let (out, _) = run_crossval(&cfg, &ds, variant, None)?;

    println!("fold manifest:\n{}", out.fold_manifest);
    for f in &out.folds {
        let frozen = match f.backbone_frozen {
            Some(true) => "backbone frozen",
            Some(false) => "backbone CHANGED",
            None => "",
        };
        println!(
            "fold {}: {} test subjects, accuracy {:.2}, loss {:.3} {frozen}",
            f.fold,
            f.test_subjects.len(),
            f.eval.accuracy,
            f.eval.loss
        );
    }
    println!("\n{}", out.report);
    println!("CNN parameters {}, LP coefficients {}", out.cnn_params, out.lp_coefficients);
    Ok(())
}
