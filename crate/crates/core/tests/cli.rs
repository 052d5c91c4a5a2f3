use std::path::Path;
use std::process::{Command, Output};

use lpgnet::dsp::preprocess;
use lpgnet::gait::synthesize_dataset;
use lpgnet::linpred::fit_all_channels;
use lpgnet::models::{build_lpgnet, LpgnetDims};
use lpgnet::rng::seeded;
use lpgnet::{Label, ModelBundle, Recording, SyntheticSpec, Variant};

fn lpgnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpgnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
seed = 5
[data.synthetic]
n_subjects_per_class = 3
walks_per_subject = 1
duration_s = 20.0
"#;

/// An untrained LPGNet bundle with a predictor fitted on synthetic controls.
fn untrained_bundle(path: &Path) {
    let ds = synthesize_dataset(&SyntheticSpec {
        n_subjects_per_class: 3,
        walks_per_subject: 1,
        duration_s: 20.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let pre = Variant::Lpgnet.preprocessing();
    let filtered: Vec<Recording> = ds.recordings.iter().map(|r| preprocess(r, pre).unwrap()).collect();
    let controls: Vec<&Recording> = filtered.iter().filter(|r| r.label == Label::Control).collect();
    let lp = fit_all_channels(&controls, 11).unwrap();
    let spec = build_lpgnet(&LpgnetDims::default());
    let net = spec.build_network(&mut seeded(0)).unwrap();
    ModelBundle::new(Variant::Lpgnet, spec, net, Some(lp), "test")
        .unwrap()
        .save(path)
        .unwrap();
}

#[test]
fn synth_then_ingest_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    let out = lpgnet(&["--config", &cfg, "synth", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(&data).unwrap().count(), 6);

    let out = lpgnet(&["--data", data.to_str().unwrap(), "ingest-check"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains('6'), "{text}");
}

#[test]
fn missing_bundle_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = tmp.path().join("GaPt01_01.txt");
    std::fs::write(&rec, "0.0 1 1 1 1 1 1 1 1 1 1 1 1 1 1 1 1 1 1\n").unwrap();
    let out = lpgnet(&[
        "predict",
        "--bundle",
        tmp.path().join("absent.bundle").to_str().unwrap(),
        "--recording",
        rec.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn exit_codes_distinguish_data_and_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = lpgnet(&["--data", empty.to_str().unwrap(), "ingest-check"]);
    assert_eq!(code(&out), 2);

    let cfg = write_config(tmp.path(), "lp_order = 0\n");
    let out = lpgnet(&["--config", &cfg, "ingest-check"]);
    assert_eq!(code(&out), 4);

    let cfg = write_config(tmp.path(), "no_such_field = 1\n");
    let out = lpgnet(&["--config", &cfg, "ingest-check"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn predict_trace_has_one_row_per_residual_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("model.bundle");
    untrained_bundle(&bundle);
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    assert_eq!(code(&lpgnet(&["--config", &cfg, "synth", "--out", data.to_str().unwrap()])), 0);
    let rec = data.join("GaPt01_01.txt");
    let csv = tmp.path().join("trace.csv");
    let out = lpgnet(&[
        "predict",
        "--bundle",
        bundle.to_str().unwrap(),
        "--recording",
        rec.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("P(PD)"));

    // 20 s at 100 Hz, decimated by two.
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.len(), 2 + 18 + 2);
    assert_eq!(reader.records().count(), 1000);
}

#[test]
fn fit_lp_writes_a_predictor() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("out");
    let out = lpgnet(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "fit-lp"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (lp, _) = lpgnet::models::load_predictor(&out_dir.join("linear_predictor.bundle")).unwrap();
    assert_eq!(lp.total_coefficients(), 198);
    assert!(out_dir.join("run_report.json").exists());
}

#[test]
fn bench_runs_on_a_saved_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("model.bundle");
    untrained_bundle(&bundle);
    let out = lpgnet(&["bench", "--bundle", bundle.to_str().unwrap(), "--runs", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("lpr") && text.contains("cnn"), "{text}");
}
