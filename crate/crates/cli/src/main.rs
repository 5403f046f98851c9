//! `memwalk`: run the walker, its ensembles and diagnostics from a JSON
//! config.
//!
//! Exit status: 0 on success, 1 when a config or an assumption check fails,
//! 2 when a run aborts, 64 on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "memwalk", version, about = "Memory-kernel Langevin walker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; the reference walker when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides MEMWALK_OUT and the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Coulomb strength of the singular term.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub t_max: Option<f64>,
    /// Reference run at full length (t_max = 1e4).
    #[arg(long, global = true)]
    pub full: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One trajectory, its radial histogram and stationarity test.
    Simulate,
    /// Seeded ensemble with per-time means of the configured observable.
    Ensemble,
    /// Sampled checks of the model assumptions.
    Validate,
    /// Decay of the mean difference between two ensembles.
    Mixing,
    /// Numeric and closed-form difference flow.
    Variational,
    /// Deterministic control path from the configured start.
    ControlPath,
    /// Radial density of the reference walker.
    ReproduceFig1,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cli.common),
        Command::Ensemble => commands::ensemble(&cli.common),
        Command::Validate => commands::validate(&cli.common),
        Command::Mixing => commands::mixing(&cli.common),
        Command::Variational => commands::variational(&cli.common),
        Command::ControlPath => commands::control_path(&cli.common),
        Command::ReproduceFig1 => commands::reproduce_fig1(&cli.common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("memwalk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
