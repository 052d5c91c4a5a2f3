//! Fits a predictor, trains a small LPGNet, saves it as a bundle, reloads it
//! and classifies a recording together with its residual energy trace.

use lpgnet::dsp::{make_windows, preprocess};
use lpgnet::gait::synthesize_dataset;
use lpgnet::linpred::fit_all_channels;
use lpgnet::models::{build_lpgnet, predict_recording, LpgnetDims};
use lpgnet::nn::{fit, TrainConfig, WindowSet};
use lpgnet::pipeline::residual_trace;
use lpgnet::rng::seeded;
use lpgnet::{Label, ModelBundle, Recording, SyntheticSpec, Variant};

fn main() -> lpgnet::Result<()> {
    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 6,
        walks_per_subject: 1,
        duration_s: 60.0,
        ..SyntheticSpec::default()
    })?;
    let n = ds.len();
    let train = &ds.recordings[1..n - 1];
    let test = [&ds.recordings[0], &ds.recordings[n - 1]];
    let pre = Variant::Lpgnet.preprocessing();
    let recs: Vec<Recording> = train.iter().map(|r| preprocess(r, pre)).collect::<Result<_, _>>()?;
    let controls: Vec<&Recording> = recs.iter().filter(|r| r.label == Label::Control).collect();
    let lp = fit_all_channels(&controls, 11)?;
    let mut windows = Vec::new();
    for r in &recs {
        windows.extend(make_windows(&lp.residual(r)?.into_inner(), 100, 50)?);
    }
    let spec = build_lpgnet(&LpgnetDims::default());
    let mut net = spec.build_network(&mut seeded(2))?;
    let cfg = TrainConfig {
        max_epochs: 10,
        ..TrainConfig::stage1()
    };
    fit(&mut net, &WindowSet::new(&windows), None, &cfg)?;

    let path = std::env::temp_dir().join("lpgnet-example.bundle");
    ModelBundle::new(Variant::Lpgnet, spec, net, Some(lp), "example")?.save(&path)?;
    let mut bundle = ModelBundle::load(&path)?;
    println!("bundle {} with {} parameters", path.display(), bundle.param_count());

    for rec in test {
        bundle.network.reset_forward_calls();
        let p = predict_recording(&mut bundle, rec)?;
        println!(
            "\n{} (true {}): P(PD) = {:.3}, forward passes: {}",
            rec.key(),
            rec.label,
            p.probability,
            bundle.network.forward_calls()
        );
        let trace = residual_trace(&p.network_input, 50, 3);
        for r in &trace.regions {
            println!("  {:6.2}-{:6.2} s  rms {:.3}  channel {}", r.start_s, r.end_s, r.peak_rms, r.channel);
        }
    }
    Ok(())
}
