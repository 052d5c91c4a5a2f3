use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpgnet::error::ErrorKind;
use lpgnet::models::ModelBundle;
use lpgnet::pipeline::{self, ExperimentConfig};
use lpgnet::{Result, Variant};

#[derive(Parser)]
#[command(name = "lpgnet", version, about = "Parkinson's gait classification from VGRF recordings")]
struct Cli {
    /// Directory of PhysioNet VGRF text files (overrides the config)
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a dataset and print its summary
    IngestCheck,
    /// Fit per-channel linear predictors on all control recordings
    FitLp,
    /// Train the baseline CNN under each validation split strategy
    Leakage {
        /// Independent holdout draws
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Subject-level k-fold cross-validation
    Crossval {
        /// lpgnet, ablation or baseline
        #[arg(long, default_value = "lpgnet")]
        variant: Variant,
    },
    /// Time single-thread inference on a two-minute recording
    Bench {
        #[arg(long)]
        bundle: PathBuf,
        /// Recording file; a synthetic one is used when absent
        #[arg(long)]
        recording: Option<PathBuf>,
        /// Timed runs (overrides the config)
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Classify one recording and export its residual trace
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        /// Trace CSV path (default: <out>/<recording>_trace.csv)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the configured synthetic dataset as text files
    Synth,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &cli.data {
        cfg.data.dir = Some(d.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.data.synthetic.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Command::Leakage { repeats: Some(r) } = cli.command {
        cfg.leakage.repeats = r;
    }
    if let Command::Bench { runs: Some(r), .. } = cli.command {
        cfg.bench.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let out = cfg.out_dir.as_path();
    match &cli.command {
        Command::IngestCheck => {
            let ds = pipeline::load_dataset(&cfg)?;
            println!("{}", pipeline::ingest_check(&ds));
        }
        Command::FitLp => {
            let ds = pipeline::load_dataset(&cfg)?;
            pipeline::ensure_dir(out)?;
            let path = out.join("linear_predictor.bundle");
            let (_, report) = pipeline::fit_lp_cmd(&cfg, &ds, Some(&path))?;
            println!(
                "{} coefficients (order {}) from {} control recordings -> {}",
                report.coefficients,
                report.order,
                report.control_recordings,
                path.display()
            );
            let mut run = pipeline::RunReport::new("fit-lp", &cfg);
            run.set_result(&report)?;
            run.artifacts.push(path);
            run.write(out)?;
        }
        Command::Leakage { .. } => {
            let ds = pipeline::load_dataset(&cfg)?;
            let (report, _) = pipeline::run_leakage_experiment(&cfg, &ds, Some(out))?;
            print!("{report}");
        }
        Command::Crossval { variant } => {
            let ds = pipeline::load_dataset(&cfg)?;
            let (outcome, _) = pipeline::run_crossval(&cfg, &ds, *variant, Some(out))?;
            println!("{}", outcome.report);
        }
        Command::Bench { bundle, recording, .. } => {
            let mut b = ModelBundle::load(bundle)?;
            let rec = match recording {
                Some(p) => pipeline::read_recording(p)?,
                None => pipeline::synthetic_bench_recording(cfg.bench.duration_s, cfg.seed)?,
            };
            let report = pipeline::run_bench(&mut b, &rec, &cfg.bench)?;
            println!("{report}");
            pipeline::ensure_dir(out)?;
            let mut run = pipeline::RunReport::new("bench", &cfg);
            run.set_result(&report)?;
            run.write(out)?;
        }
        Command::Predict { bundle, recording, csv } => {
            let csv = match csv {
                Some(p) => p.clone(),
                None => {
                    pipeline::ensure_dir(out)?;
                    let stem = recording.file_stem().unwrap_or_default().to_string_lossy();
                    out.join(format!("{stem}_trace.csv"))
                }
            };
            let report = pipeline::predict_one(bundle, recording, &cfg.predict, Some(Path::new(&csv)))?;
            print!("{report}");
            println!("trace: {} rows -> {}", report.trace_rows, csv.display());
        }
        Command::Synth => {
            let files = pipeline::synth_cmd(&cfg, out)?;
            println!("wrote {} recordings to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(ErrorKind::Config.exit_code());
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code())
        }
    }
}
