mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn run() -> CliResult<()> {
    let mut argv: Vec<_> = std::env::args_os().collect();
    if let Some(path) = config::locate(&argv) {
        argv = config::apply(argv, &path)?;
    }
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Pair(a) => commands::pair(a),
        Command::BuildDataset(a) => commands::build(a),
        Command::Learn(a) => commands::learn(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Visualize(a) => commands::visualize(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
