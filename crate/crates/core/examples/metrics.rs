//! Confusion counts, AUC with ties and fold aggregation.

use lpgnet::metrics::{accuracy_f1, aggregate_folds, auc, EvalResult, THRESHOLD};

fn main() -> lpgnet::Result<()> {
    let probs = [0.9, 0.4, 0.6];
    let labels = [true, false, false];
    let (acc, f1, c) = accuracy_f1(&probs, &labels, THRESHOLD)?;
    println!("tp {} fp {} tn {} fn {}: accuracy {acc:.3}, F1 {f1:.3}", c.tp, c.fp, c.tn, c.fn_);

    println!("AUC {:.2}", auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true])?);
    println!("AUC with all ties {:.2}", auc(&[0.5; 4], &[false, true, false, true])?);

    let folds = vec![
        EvalResult::compute(&[0.8, 0.3, 0.6, 0.2], &[true, false, true, false], 0.31)?,
        EvalResult::compute(&[0.7, 0.6, 0.4, 0.1], &[true, false, true, false], 0.52)?,
    ];
    let report = aggregate_folds(folds, "example", 0, "none")?;
    println!("{report}");
    report.write_csv(std::io::stdout())?;
    Ok(())
}
