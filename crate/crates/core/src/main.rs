use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use zs_seek::harness::{load_config, run_experiment, ExperimentError, Overrides};

/// Distributed zeroth-order Nash equilibrium seeking between two networks.
#[derive(Debug, Parser)]
#[command(name = "zs-seek", version, allow_negative_numbers = true)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Seed to run; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    rounds: Option<u64>,
    /// Smoothing radius.
    #[arg(long)]
    mu: Option<f64>,
    /// Step size numerator `a` in `a / (k+1)^p`.
    #[arg(long = "step-a")]
    step_a: Option<f64>,
    /// Step size exponent `p`.
    #[arg(long = "step-p")]
    step_p: Option<f64>,
    #[arg(long = "metrics-every")]
    metrics_every: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let overrides = Overrides {
        scenario: cli.scenario,
        seeds: cli.seeds,
        rounds: cli.rounds,
        mu: cli.mu,
        step_a: cli.step_a,
        step_p: cli.step_p,
        metrics_every: cli.metrics_every,
        out: cli.out,
    };
    let cfg = match load_config(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    let threads = std::env::var("ZS_SEEK_THREADS")
        .ok()
        .and_then(|v| v.parse().ok());
    match run_experiment(&cfg, threads) {
        Ok(summary) => {
            println!(
                "{} seed(s), {} rounds, median final equilibrium error {:.3e}; results in {}",
                summary.seeds.len(),
                cfg.rounds,
                summary.median_final_ne(),
                cfg.output_path.display()
            );
            ExitCode::SUCCESS
        }
        Err(ExperimentError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
