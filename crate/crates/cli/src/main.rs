//! `emosid`: batch driver for feature extraction, training, identification,
//! evaluation, cross-validation and synthetic corpora.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig, Settings};

#[derive(Debug, Parser)]
#[command(name = "emosid", version, about = "Speaker identification in emotional talking environments")]
struct Cli {
    /// Flat TOML file of settings; flags of the same name override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute acoustic and prosodic feature files for every audio utterance.
    Extract,
    /// Train one model per speaker under the configured plan.
    Train,
    /// Identify the speaker of one utterance (WAV or feature file).
    Identify {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the test session and write reports.
    Evaluate,
    /// Cross-validate over random subsets of the corpus.
    Xval,
    /// Generate a synthetic corpus and its manifest in the output directory.
    Synth,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let cfg = RunConfig::resolve(cli.settings.or(file))?;
    match &cli.command {
        Command::Extract => commands::extract(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Identify { input } => commands::identify(&cfg, input),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Xval => commands::xval(&cfg),
        Command::Synth => commands::synth(&cfg),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<emosid::Error>().is_some_and(emosid::Error::is_validation)
    });
    if validation {
        1
    } else {
        2
    }
}

/// The error chain, skipping causes already quoted by the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
