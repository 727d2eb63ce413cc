use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snls_cli::{cmd_converge, cmd_moments, cmd_simulate, cmd_verify, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "snls", version, about = "Stochastic NLS with Marcus jump noise: spectral Galerkin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides run.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of trajectories (overrides run.trajectories).
    #[arg(long, global = true)]
    trajectories: Option<usize>,
    /// Worker threads for the trajectory pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate trajectory ensembles at every configured level.
    Simulate,
    /// Coupled convergence study against the finest level.
    Converge,
    /// Verify the machine-checkable properties.
    Verify,
    /// Ensemble moment estimates per level.
    Moments,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path =
        cli.config.ok_or_else(|| CliError::Core(snls_core::SnlsError::Usage("--config PATH is required".into())))?;
    let mut config = RunConfig::load(&path)?;
    config.apply(&Overrides { seed: cli.seed, out: cli.out, trajectories: cli.trajectories, threads: cli.threads });
    match cli.command {
        Command::Simulate => {
            let report = cmd_simulate(&config)?;
            for level in &report.levels {
                let drift = level.trajectories.iter().map(|t| t.max_relative_mass_drift).fold(0.0, f64::max);
                println!(
                    "level {}: {} trajectories, max relative mass drift {drift:e}",
                    level.level,
                    level.trajectories.len()
                );
            }
        }
        Command::Converge => {
            let report = cmd_converge(&config)?;
            for row in &report.rows {
                println!("level {} vs {}: mean sup distance {:e}", row.level, row.reference, row.mean_sup_distance);
            }
            if let Some(flag) = report.strictly_decreasing {
                println!("strictly decreasing: {flag}");
            }
        }
        Command::Moments => {
            let report = cmd_moments(&config)?;
            for level in &report.levels {
                println!("level {}: median sup energy {:e}", level.level, level.summary.sup_energy_median);
            }
            println!("median ratio {:e}", report.sup_energy_median_ratio);
        }
        Command::Verify => {
            cmd_verify(&config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
