//! Generates a small pseudo-gait dataset, writes it in the PhysioNet text
//! layout and scans it back.
//!
//! cargo run --example synthetic_dataset -- [out_dir]

use std::path::PathBuf;

use lpgnet::gait::{dataset_summary, scan_dataset_dir, synthesize_dataset};
use lpgnet::SyntheticSpec;

fn main() -> lpgnet::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lpgnet-synthetic"));
    let spec = SyntheticSpec {
        n_subjects_per_class: 5,
        walks_per_subject: 2,
        duration_s: 60.0,
        ..SyntheticSpec::default()
    };
    let ds = synthesize_dataset(&spec)?;
    let files = ds.export(&dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());

    let back = scan_dataset_dir(&dir)?;
    println!("{}", dataset_summary(&back));
    let first = &back.recordings[0];
    println!(
        "{}: {} samples at {} Hz, label {}",
        first.key(),
        first.len(),
        first.sample_rate_hz,
        first.label
    );
    Ok(())
}
