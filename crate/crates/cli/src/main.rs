mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::RunConfig;
use crate::error::{CliError, EXIT_CONFIG};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let base = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(args.to_config());
    cfg.validate()?;
    if let Some(c) = &cfg.command {
        if c != command.name() {
            log::warn!("config names command `{c}`; running `{}`", command.name());
        }
    }
    match command {
        Command::Train(_) => commands::train::run(&cfg),
        Command::Score(_) => commands::score::run(&cfg, commands::score::Columns::Scores),
        Command::Explain(_) => commands::score::run(&cfg, commands::score::Columns::Attribution),
        Command::Eval(_) => commands::eval::run(&cfg),
        Command::Synth(_) => commands::synth::run(&cfg),
        Command::Pipeline(_) => commands::pipeline::run(&cfg),
    }
}
