//! Thin command-line front end over the `misspec_lab` library: asymptotic
//! reports, single Monte Carlo cells, full sweeps, and the invariant suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use misspec_lab::asymptotics::{Asymptotics, AsymptoticReport};
use misspec_lab::checks::{run_invariant_suite, InvariantOptions};
use misspec_lab::experiments::{emit, run_cell, summarize, sweep, verdicts, ExperimentConfig, SweepMetadata, SweepResult};
use misspec_lab::perturbation::{DirectionSpec, RegimeConfig};
use misspec_lab::Result;

#[derive(Parser)]
#[command(
    name = "misspec-lab",
    about = "Compare SAA, ETO and IEO decision pipelines under locally misspecified data distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment configuration; defaults to the built-in two-product
    /// configuration with the Hermite-2 direction.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed (overrides the config value).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results print to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling-grid cells per axis (overrides the config value).
    #[arg(long)]
    resolution: Option<usize>,
    /// Monte Carlo replications per cell (overrides the config value).
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Quadrature asymptotics: bias vectors, influence-function variances,
    /// and limiting regrets per regime, no sampling involved.
    Analyze(CommonArgs),
    /// One Monte Carlo cell: the first (n, alpha) pair of the configuration.
    Simulate(CommonArgs),
    /// The full factorial sweep over the configured (n, alpha) grid.
    Sweep(CommonArgs),
    /// Monte Carlo invariant suite tying the sampled pipelines back to the
    /// quadrature asymptotics; exits nonzero if any invariant fails.
    Check(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::benchmark_default(DirectionSpec::Hermite2),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(resolution) = args.resolution {
        config.grid_resolution = resolution;
    }
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct RegimeReport {
    alpha: f64,
    report: AsymptoticReport,
}

fn analyze(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let asy = Asymptotics::new(config.build_problem()?, config.family(), config.theta0)?;
    let direction = config.build_direction()?;
    let mut reports = Vec::new();
    for &alpha in &config.alphas {
        let regime = RegimeConfig::new(alpha, config.sample_sizes[0])?.regime();
        reports.push(RegimeReport {
            alpha,
            report: asy.report(&direction, regime),
        });
    }
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| misspec_lab::Error::Config(format!("report serialization: {e}")))?;
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .and_then(|()| std::fs::write(dir.join("analysis.json"), &json))
                .map_err(|e| misspec_lab::Error::Io {
                    path: dir.display().to_string(),
                    source: e,
                })?;
            eprintln!("wrote {}", dir.join("analysis.json").display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn single_cell_result(config: &ExperimentConfig) -> Result<SweepResult> {
    let n = config.sample_sizes[0];
    let alpha = config.alphas[0];
    let (samples, failures) = run_cell(config, n, alpha)?;
    let summaries = summarize(&samples);
    let cell_verdicts = verdicts(&samples);
    Ok(SweepResult {
        metadata: SweepMetadata {
            seed: config.seed,
            common_random_numbers: true,
            direction: config.direction.clone(),
            tilt: config.tilt,
            theta0: config.theta0,
            data_dim: config.problem.data_dim,
            grid_resolution: config.grid_resolution,
            failure_count: failures.len(),
        },
        summaries,
        verdicts: cell_verdicts,
        samples,
        failures,
    })
}

fn emit_or_print(result: &SweepResult, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(dir) => {
            emit(result, dir)?;
            eprintln!("wrote samples.csv, summary.json and per-alpha panels to {}", dir.display());
        }
        None => {
            let json = serde_json::to_string_pretty(result)
                .map_err(|e| misspec_lab::Error::Config(format!("serialization: {e}")))?;
            println!("{json}");
        }
    }
    Ok(())
}

fn simulate(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    emit_or_print(&single_cell_result(&config)?, &args.out)
}

fn run_sweep(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    emit_or_print(&sweep(&config)?, &args.out)
}

fn check(args: &CommonArgs) -> Result<bool> {
    let opts = InvariantOptions {
        seed: args.seed.unwrap_or(InvariantOptions::default().seed),
        reps: args.reps,
        resolution: args.resolution,
    };
    let outcomes = run_invariant_suite(&opts)?;
    let mut all_passed = true;
    for o in &outcomes {
        println!(
            "[{}] {} — {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        all_passed &= o.passed;
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze(args) => analyze(args).map(|()| true),
        Command::Simulate(args) => simulate(args).map(|()| true),
        Command::Sweep(args) => run_sweep(args).map(|()| true),
        Command::Check(args) => check(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
