//! `qutrit-oam`: file-based front-end to simulation, tomography, witness
//! analysis and SLM mode-conversion scans.
//!
//! Exit codes: 0 success, 1 runtime or convergence failure, 2 usage or
//! configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Overrides;

#[derive(Parser)]
#[command(
    name = "qutrit-oam",
    version,
    about = "Qutrit-qutrit OAM entanglement pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the quadrature samples per axis.
    #[arg(long, global = true)]
    grid_samples: Option<usize>,

    /// Overrides the number of Monte-Carlo resamples.
    #[arg(long, global = true)]
    mc_samples: Option<usize>,

    /// Prints failures as a JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample coincidence counts from a source model.
    Simulate { config: PathBuf },
    /// Reconstruct the density matrix from a counts CSV.
    Reconstruct { config: PathBuf },
    /// Optimal MES fidelity and the Schmidt-number-3 witness.
    Analyze { config: PathBuf },
    /// Gaussian component after a displaced vortex or step mask.
    SlmScan { config: PathBuf },
    /// Intensity and phase snapshot of a (masked) LG mode.
    Field { config: PathBuf },
    /// Cross-correlation g2: forward model or background inference.
    G2 { config: PathBuf },
    /// Simulate, reconstruct and analyze in the reference regime.
    Repro { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides {
        seed: cli.seed,
        grid_samples: cli.grid_samples,
        mc_samples: cli.mc_samples,
    };
    let result = match &cli.command {
        Command::Simulate { config } => commands::simulate(config, &ov),
        Command::Reconstruct { config } => commands::reconstruct(config, &ov),
        Command::Analyze { config } => commands::analyze(config, &ov),
        Command::SlmScan { config } => commands::slm_scan(config, &ov),
        Command::Field { config } => commands::field(config, &ov),
        Command::G2 { config } => commands::g2(config, &ov),
        Command::Repro { config } => commands::repro(config, &ov),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.error_json {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
