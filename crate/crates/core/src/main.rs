use std::path::PathBuf;
use std::process::ExitCode;

use chb_core::app::{self, Command, EXIT_ERROR};
use clap::{Parser, Subcommand};
use log::LevelFilter;

#[derive(Parser)]
#[command(name = "chb", version, about = "Drug dosing optimization for a Cahn-Hilliard-Brinkman tumour model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// INI problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed for the verification checks.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the state system for the configured control.
    Forward(RunArgs),
    /// Minimize the cost by projected gradient descent.
    Optimize(RunArgs),
    /// Run the gradient, duality, Dirichlet-limit and energy checks.
    Check(RunArgs),
}

fn init_logging() -> Result<(), String> {
    let level = match std::env::var("CHB_LOG").as_deref() {
        Err(_) | Ok("info") => LevelFilter::Info,
        Ok("quiet") => LevelFilter::Error,
        Ok("debug") => LevelFilter::Debug,
        Ok(other) => return Err(format!("CHB_LOG must be quiet, info or debug, got '{other}'")),
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging() {
        eprintln!("chb: {e}");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    let (command, args) = match cli.command {
        Cmd::Forward(a) => (Command::Forward, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Check(a) => (Command::Check, a),
    };
    match app::run(command, &args.config, &args.out, args.seed) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("chb: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
