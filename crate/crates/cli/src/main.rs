mod args;
mod commands;
mod failure;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use failure::{CliResult, Failure};
use manifest::RunManifest;

fn dispatch(command: &Command) -> CliResult<commands::Outcome> {
    match command {
        Command::Gen(a) => commands::gen(a),
        Command::Le(a) => commands::le(a),
        Command::Bifurcation(a) => commands::bifurcation(a),
        Command::Hist(a) => commands::hist(a),
        Command::Test(a) => commands::test(a),
        Command::Bench(a) => commands::bench(a),
        Command::Replay(_) => unreachable!("replay is resolved before dispatch"),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let command = match cli.command {
        Command::Replay(replay) => {
            let recorded = RunManifest::read(&replay.manifest_path)?;
            let mut command = recorded.params;
            if let Some(out) = replay.out {
                command.set_out(out);
            }
            command
        }
        command => command,
    };
    let start = Instant::now();
    let outcome = dispatch(&command)?;
    let manifest_path = cli
        .manifest
        .unwrap_or_else(|| manifest::default_path(command.name(), command.out()));
    RunManifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: outcome.seeds,
        seed_expansion: manifest::SEED_EXPANSION.to_string(),
        params: command,
        outputs: outcome.outputs,
        duration_seconds: start.elapsed().as_secs_f64(),
        results: outcome.results,
    }
    .write(&manifest_path)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(failure::VALIDATION as u8),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code as u8)
        }
    }
}
