//! `scaffold`: tabulate cell coefficients, simulate regeneration, optimize
//! the scaffold density and export a printable surface.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scaffold_core::config::RunConfig;
use scaffold_core::macroscale::Mode;

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "scaffold", version, about)]
struct Cli {
    /// Run configuration (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Coefficient mode, overriding `simulation.mode`.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the cell problems and write the coefficient table.
    Tabulate,
    /// Run the regeneration model from the initial design.
    Simulate,
    /// Optimize the scaffold density.
    Optimize,
    /// Build the scaffold surface of a design as binary STL.
    Reconstruct {
        /// Design CSV, overriding `reconstruct.design`.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(mode) = cli.mode {
        cfg.simulation.mode = mode;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Tabulate => commands::tabulate(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Optimize => commands::optimize(&cfg),
        Command::Reconstruct { design } => {
            if design.is_some() {
                cfg.reconstruct.design = design;
            }
            commands::reconstruct(&cfg)
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
