mod args;
mod commands;
mod config;
mod exit;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use config::{FileConfig, Settings};

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let preset = match &cli.command {
        Command::Train(a) => a.model.preset,
        Command::Eval(a) => a.model.preset,
        _ => None,
    };
    let mut settings = Settings::resolve(&file, cli.seed, cli.out_dir.clone(), preset)?;
    match &cli.command {
        Command::Synth(a) => commands::synth(&settings, a),
        Command::Segment(a) => commands::segment(&settings, a),
        Command::Label(a) => commands::label(&settings, a),
        Command::Pairs(a) => commands::pairs(&settings, a),
        Command::Train(a) => {
            settings.apply_model_flags(&a.model);
            commands::train(&settings, a)
        }
        Command::Eval(a) => {
            settings.apply_model_flags(&a.model);
            commands::eval(&settings, a)
        }
        Command::Score(a) => commands::score(&settings, a),
        Command::Plot(a) => commands::plot(&settings, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version exit 0, everything else 2
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code(&err))
        }
    }
}
