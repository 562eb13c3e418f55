mod args;
mod commands;
mod error;
mod report;
mod setup;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Mesh(a) => commands::mesh(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Report(a) => commands::report(a),
        Command::Track(a) => commands::track(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
