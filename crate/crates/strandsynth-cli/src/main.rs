//! Command-line front end: single renders, dataset generation, verification
//! suites, and benchmarks.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use strandsynth::analysis::estimate_f0_refined;
use strandsynth::bench::{run_benchmarks, BenchConfig};
use strandsynth::config::load_toml;
use strandsynth::dataset::{generate_dataset, DatasetOptions};
use strandsynth::scheme::render;
use strandsynth::verify::run_suite;
use strandsynth::wav::{normalize_peak, write_wav, SampleFormat};
use strandsynth::{Error, ParamDistribution, SimulationConfig};

#[derive(Parser)]
#[command(
    name = "strandsynth",
    about = "Physical-modeling string synthesizer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one configuration to a WAV file.
    Render(RenderArgs),
    /// Render a randomized dataset with a JSONL manifest.
    Dataset(DatasetArgs),
    /// Run built-in verification suites.
    Verify(VerifyArgs),
    /// Measure wall-time scaling across durations and grid densities.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Float32,
    Int16,
}

impl From<FormatArg> for SampleFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Float32 => SampleFormat::Float32,
            FormatArg::Int16 => SampleFormat::Int16,
        }
    }
}

#[derive(Args)]
struct RenderArgs {
    /// Simulation config TOML; omitted, a plucked demo string is rendered.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output WAV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the render duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Override the sample rate in Hz.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// On-disk sample encoding.
    #[arg(long, value_enum, default_value = "float32")]
    format: FormatArg,
    /// Write full field snapshots as JSON to this path.
    #[arg(long)]
    dump_fields: Option<PathBuf>,
    /// Keep every Nth step when dumping fields (unless the config already
    /// sets a stride).
    #[arg(long, default_value_t = 64)]
    field_stride: usize,
    /// Write a JSON sidecar with the config snapshot and diagnostics.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Parameter distribution TOML; omitted, the default distribution runs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for WAV files, manifest.jsonl, and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Number of samples to draw.
    #[arg(short = 'n', long, default_value_t = 8)]
    count: usize,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks the machine default.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// On-disk sample encoding.
    #[arg(long, value_enum, default_value = "float32")]
    format: FormatArg,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite to run: detune, modes, decoupling, oracle, dissipation, or all.
    #[arg(long, default_value = "all")]
    suite: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark plan TOML; omitted, a default sweep runs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override renders per case.
    #[arg(long)]
    repeats: Option<usize>,
    /// Write the full report as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Render(args) => run_render(args),
        Command::Dataset(args) => run_dataset(args),
        Command::Verify(args) => run_verify(args),
        Command::Bench(args) => run_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Config and parameter problems are usage errors; numerical
            // failures (divergence, non-convergence) are runtime failures.
            let usage = err.chain().any(|e| {
                matches!(
                    e.downcast_ref::<Error>(),
                    Some(Error::InvalidParam(_) | Error::Config(_))
                )
            });
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run_render(args: RenderArgs) -> anyhow::Result<ExitCode> {
    let mut cfg: SimulationConfig = match &args.config {
        Some(path) => load_toml(path).with_context(|| format!("loading {}", path.display()))?,
        None => SimulationConfig::plucked(300.0, 0.003, 0.14),
    };
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    if let Some(r) = args.sample_rate {
        cfg.sample_rate = r;
    }
    if args.dump_fields.is_some() && cfg.field_dump_stride.is_none() {
        cfg.field_dump_stride = Some(args.field_stride.max(1));
    }

    let result = render(&cfg)?;
    let raw_peak = result
        .samples
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let mut samples = result.samples.clone();
    let gain = normalize_peak(&mut samples);
    let estimated = estimate_f0_refined(&samples[samples.len() / 2..], cfg.sample_rate);
    write_wav(
        &args.out,
        &samples,
        cfg.sample_rate.round() as u32,
        args.format.into(),
    )
    .with_context(|| format!("writing {}", args.out.display()))?;

    println!(
        "wrote {}: {} samples at {} Hz, grid {}x{}, raw peak {raw_peak:.4e}, gain {gain:.4e}",
        args.out.display(),
        samples.len(),
        cfg.sample_rate,
        result.grid.n_t,
        result.grid.n_l,
    );
    if let Some(f0) = estimated {
        println!("estimated f0: {f0:.2} Hz");
    }

    if let Some(path) = &args.sidecar {
        let sidecar = serde_json::json!({
            "config": result.config,
            "grid": result.grid,
            "diagnostics": result.diagnostics,
            "raw_peak": raw_peak,
            "normalization_gain": gain,
            "estimated_f0_hz": estimated,
        });
        std::fs::write(path, serde_json::to_string_pretty(&sidecar)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.dump_fields {
        let dump = serde_json::json!({
            "grid": result.grid,
            "frames": result.fields,
        });
        std::fs::write(path, serde_json::to_string(&dump)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_dataset(args: DatasetArgs) -> anyhow::Result<ExitCode> {
    let dist: ParamDistribution = match &args.config {
        Some(path) => load_toml(path).with_context(|| format!("loading {}", path.display()))?,
        None => ParamDistribution::default(),
    };
    let options = DatasetOptions {
        count: args.count,
        seed_override: args.seed,
        workers: args.workers,
        format: args.format.into(),
    };
    let summary = generate_dataset(&dist, &args.out, &options)?;
    println!(
        "dataset {}: {} rendered, {} failed (seed {})",
        args.out.display(),
        summary.rendered,
        summary.failed,
        summary.master_seed,
    );
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let checks = run_suite(&args.suite)?;
    let mut failures = 0usize;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", check.name, check.detail);
        if !check.passed {
            failures += 1;
        }
    }
    println!("{} checks, {} failed", checks.len(), failures);
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let mut plan: BenchConfig = match &args.config {
        Some(path) => load_toml(path).with_context(|| format!("loading {}", path.display()))?,
        None => BenchConfig::default(),
    };
    if let Some(r) = args.repeats {
        plan.repeats = r;
    }
    let report = run_benchmarks(&plan)?;
    println!(
        "environment: {} cores, {} {}",
        report.environment.cores, report.environment.os, report.environment.arch
    );
    for case in &report.cases {
        println!(
            "{}: median {:.2} ms (IQR {:.2} ms) over {} runs, {} steps, {} grid points",
            case.label,
            case.median_ms,
            case.iqr_ms,
            case.times_ms.len(),
            case.steps,
            case.grid_points,
        );
    }
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}
