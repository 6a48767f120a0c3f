//! `telebench` — command-line front end for the desk-scale bilateral
//! teleoperator simulator.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.

mod commands;
mod config;
mod svg;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "telebench",
    version,
    about = "Simulate, identify, plot, and psychophysically probe a 1-DoF bilateral teleoperator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; writes timeseries.csv and a run manifest
    Simulate(SeededArgs),
    /// Fit participant- and environment-side models from a timeseries log
    Identify(PlainArgs),
    /// Render step-response and Bode figures from fitted model files
    Figures(PlainArgs),
    /// Run a simulated stiffness-discrimination session
    Psych(SeededArgs),
    /// Run simulate (optionally plus identify) across values of one parameter
    Sweep(PlainArgs),
}

#[derive(Args)]
struct SeededArgs {
    /// Path to a TOML config, or to a manifest.toml from a previous run
    #[arg(long)]
    config: String,
    /// Output directory, created if missing; defaults to the recorded
    /// directory when --config is a manifest
    #[arg(long)]
    out: Option<String>,
    /// Override the seed from the config (recorded in the new manifest)
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress non-error output
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct PlainArgs {
    /// Path to a TOML config, or to a manifest.toml from a previous run
    #[arg(long)]
    config: String,
    /// Output directory, created if missing; defaults to the recorded
    /// directory when --config is a manifest
    #[arg(long)]
    out: Option<String>,
    /// Suppress non-error output
    #[arg(long)]
    quiet: bool,
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => {
            commands::cmd_simulate(&a.config, a.out.as_deref(), a.seed, a.quiet)
        }
        Command::Identify(a) => commands::cmd_identify(&a.config, a.out.as_deref(), a.quiet),
        Command::Figures(a) => commands::cmd_figures(&a.config, a.out.as_deref(), a.quiet),
        Command::Psych(a) => commands::cmd_psych(&a.config, a.out.as_deref(), a.seed, a.quiet),
        Command::Sweep(a) => commands::cmd_sweep(&a.config, a.out.as_deref(), a.quiet),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
