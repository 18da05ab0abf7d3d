//! `cads` command-line runner.
//!
//! Subcommands: `gen-data`, `fit-surrogate`, `run`, `report`. Each takes a
//! TOML config (`--config`), an optional seed override (`--seed`) and an
//! optional output directory (`--out`); the `CADS_OUT_ROOT` environment
//! variable re-roots relative output directories.
//!
//! Exit codes: 0 success, 2 one or more experiment cells failed, 3 invalid
//! configuration.

use cads_core::error::CoreError;
use cads_core::experiment::{self, ExperimentConfig};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cads", about = "Compute-budget-aware data selection experiments", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed(s).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's out_dir under CADS_OUT_ROOT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset described by the config's [gen] section as CSV.
    GenData(Common),
    /// Collect loss probes and persist the fitted surrogate.
    FitSurrogate(Common),
    /// Execute every cell of the configured experiment.
    Run(Common),
    /// Aggregate a finished run (mean/std per cell, trajectory export).
    Report(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CoreError::Config(_) | CoreError::Domain(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch() -> Result<ExitCode, CoreError> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::GenData(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let out_dir = c.out.unwrap_or_else(|| experiment::resolve_out_dir(&cfg, None));
            let path = experiment::gen_data(&cfg, c.seed, &out_dir)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::FitSurrogate(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let out_dir = c.out.unwrap_or_else(|| experiment::resolve_out_dir(&cfg, None));
            let (fit, probes) = experiment::fit_surrogate_cmd(&cfg, c.seed, &out_dir)?;
            println!("wrote {}", fit.display());
            println!("wrote {}", probes.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run(c) => {
            let mut cfg = ExperimentConfig::load(&c.config)?;
            if let Some(seed) = c.seed {
                cfg.seeds = vec![seed];
            }
            let report = experiment::run_experiment(&cfg, c.out.as_deref())?;
            println!(
                "{} rows -> {}",
                report.rows.len(),
                report.out_dir.join("summary.csv").display()
            );
            for (cell, err) in &report.failures {
                eprintln!("cell {cell} failed: {err}");
            }
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Cmd::Report(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let run_dir = c.out.unwrap_or_else(|| experiment::resolve_out_dir(&cfg, None));
            let tables = experiment::report(&run_dir)?;
            println!(
                "{} aggregate rows, {} trajectory points -> {}",
                tables.aggregate.len(),
                tables.trajectories.len(),
                run_dir.join("aggregate.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
