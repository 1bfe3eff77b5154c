//! `fourns`: experiments on truncated fourth-order NLS flows and their
//! normal-form energies, each written to its own run directory.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Command, Overrides, RunConfig};
use error::CliError;
use output::RunDir;

#[derive(Parser, Debug)]
#[command(name = "fourns", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: Overrides,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    let env_out = std::env::var_os("FOURNS_OUT").map(PathBuf::from);
    let cfg = RunConfig::resolve(cli.command, cli.params.over(file), env_out)?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let mut dir = RunDir::create(&cfg)?;
    match commands::run(&cfg, &mut dir) {
        Ok(summary) => {
            dir.finish("ok")?;
            println!("{}", dir.path().display());
            println!("{summary}");
            Ok(())
        }
        Err(e) => {
            dir.finish("failed")?;
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fourns: {e}");
            e.exit_code()
        }
    }
}
