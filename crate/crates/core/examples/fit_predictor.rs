//! Fits the 18 per-channel linear predictors on control recordings and
//! inspects the residuals they leave on both classes.

use lpgnet::dsp::preprocess;
use lpgnet::gait::synthesize_dataset;
use lpgnet::linpred::{fit_all_channels, fit_diagnostics, DEFAULT_ORDER};
use lpgnet::{Label, Recording, SyntheticSpec, Variant};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> lpgnet::Result<()> {
    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 8,
        ..SyntheticSpec::default()
    })?;
    let pre = Variant::Lpgnet.preprocessing();
    let recs: Vec<Recording> = ds.recordings.iter().map(|r| preprocess(r, pre)).collect::<Result<_, _>>()?;
    let controls: Vec<&Recording> = recs.iter().filter(|r| r.label == Label::Control).collect();

    let lp = fit_all_channels(&controls, DEFAULT_ORDER)?;
    println!("{} coefficients (order {})", lp.total_coefficients(), lp.order());
    println!("channel 0: {:?}", lp.coefficients()[0]);

    let diag = fit_diagnostics(&lp, &controls)?;
    println!("residual/signal energy on the fitting data: {:.4}", mean(&diag.energy_ratio));

    for label in [Label::Control, Label::Pd] {
        let per_rec: Vec<f64> = recs
            .iter()
            .filter(|r| r.label == label)
            .map(|r| lp.residual(r).map(|e| mean(&e.channel_mean_abs())))
            .collect::<Result<_, _>>()?;
        println!("{label}: mean |residual| {:.4}", mean(&per_rec));
    }
    Ok(())
}
