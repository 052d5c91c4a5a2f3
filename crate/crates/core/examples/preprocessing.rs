//! The two preprocessing chains and windowing.

use lpgnet::dsp::{decimate2, make_windows, moving_average, preprocess, window_count, PreprocessConfig};
use lpgnet::gait::synthesize_dataset;
use lpgnet::SyntheticSpec;

fn main() -> lpgnet::Result<()> {
    println!("moving average of [1, 3, 5, 7]: {:?}", moving_average(&[1.0, 3.0, 5.0, 7.0], 2));
    println!("decimate2 of [0, 1, 2, 3, 4]:   {:?}", decimate2(&[0.0, 1.0, 2.0, 3.0, 4.0]));

    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 1,
        walks_per_subject: 1,
        duration_s: 120.0,
        ..SyntheticSpec::default()
    })?;
    let rec = &ds.recordings[0];
    println!("\n{}: {} samples at {} Hz", rec.key(), rec.len(), rec.sample_rate_hz);

    for cfg in [PreprocessConfig::NORMALIZED, PreprocessConfig::FILTERED_DECIMATED] {
        let out = preprocess(rec, cfg)?;
        let ch = &out.channels[16];
        let mean = ch.iter().sum::<f64>() / ch.len() as f64;
        let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ch.len() as f64;
        println!(
            "{cfg}: {} samples at {} Hz, left-foot total mean {mean:.3} variance {var:.3}",
            out.len(),
            out.sample_rate_hz
        );
        let windows = make_windows(&out, 100, 50)?;
        assert_eq!(windows.len(), window_count(out.len(), 100, 50));
        println!("  {} windows of 100 samples, stride 50", windows.len());
    }
    Ok(())
}
