//! Single-thread inference timing on a two-minute recording, split into
//! preprocessing, residual and CNN stages.

use lpgnet::models::{LpgnetDims, BaselineDims};
use lpgnet::linpred::LinearPredictor;
use lpgnet::pipeline::{run_bench, synthetic_bench_recording, BenchConfig};
use lpgnet::rng::seeded;
use lpgnet::{ModelBundle, Variant};

fn main() -> lpgnet::Result<()> {
    let rec = synthetic_bench_recording(120.0, 1)?;
    let cfg = BenchConfig {
        runs: 200,
        ..BenchConfig::default()
    };
    for variant in [Variant::Lpgnet, Variant::Ablation, Variant::Baseline] {
        let spec = variant.spec(&LpgnetDims::default(), &BaselineDims::default());
        let net = spec.build_network(&mut seeded(0))?;
        let lp = variant.uses_predictor().then(|| LinearPredictor::zeros(11));
        let mut bundle = ModelBundle::new(variant, spec, net, lp, "bench")?;
        let report = run_bench(&mut bundle, &rec, &cfg)?;
        println!("{variant}\n{report}\n");
    }
    Ok(())
}
