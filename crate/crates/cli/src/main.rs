//! `insightlens`: the analysis pipeline from raw interaction logs to models,
//! attributions and statistics, plus the note service.
//!
//! Exit status is 0 on success, 2 for usage errors (missing flags or input
//! files, bad config) and 1 for errors in the data itself.

mod args;
mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use args::*;

#[derive(Debug, Parser)]
#[command(name = "insightlens", version, about = "Interaction-log analytics pipeline")]
struct Cli {
    /// TOML file with one table per subcommand (e.g. [mine-patterns]); flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort: event log, notes and profile assignments
    Simulate(SimulateArgs),
    /// Validate a raw event log, drop short mouse-overs and summarise sessions
    Ingest(IngestArgs),
    /// Extract run and sequence patterns shared across participants
    MinePatterns(MineArgs),
    /// Build per-note feature tables and per-participant aggregates
    BuildFeatures(BuildFeaturesArgs),
    /// Split by participant and fit a note classifier
    Train(TrainArgs),
    /// Score a model on the test side of its split
    Evaluate(EvaluateArgs),
    /// Shapley attributions and feature importance for a model
    Explain(ExplainArgs),
    /// Correlations and paired tests over participant aggregates
    Stats(StatsArgs),
    /// Run the note and session service
    Serve(ServeArgs),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    simulate: Option<SimulateArgs>,
    ingest: Option<IngestArgs>,
    mine_patterns: Option<MineArgs>,
    build_features: Option<BuildFeaturesArgs>,
    train: Option<TrainArgs>,
    evaluate: Option<EvaluateArgs>,
    explain: Option<ExplainArgs>,
    stats: Option<StatsArgs>,
    serve: Option<ServeArgs>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit status 2.
    Usage(String),
    /// The inputs were read but could not be processed; exit status 1.
    Data(String),
}

impl CliError {
    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

fn load_config(path: &PathBuf) -> Result<ConfigFile, CliError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
    toml::from_str(&src).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
}

fn layer<T: Layer>(args: &mut T, section: Option<T>) {
    if let Some(file) = section {
        args.layer(file);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut file = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Simulate(mut a) => {
            layer(&mut a, file.simulate.take());
            commands::simulate(a)
        }
        Command::Ingest(mut a) => {
            layer(&mut a, file.ingest.take());
            commands::ingest(a)
        }
        Command::MinePatterns(mut a) => {
            layer(&mut a, file.mine_patterns.take());
            commands::mine_patterns(a)
        }
        Command::BuildFeatures(mut a) => {
            layer(&mut a, file.build_features.take());
            commands::build_features(a)
        }
        Command::Train(mut a) => {
            layer(&mut a, file.train.take());
            commands::train(a)
        }
        Command::Evaluate(mut a) => {
            layer(&mut a, file.evaluate.take());
            commands::evaluate(a)
        }
        Command::Explain(mut a) => {
            layer(&mut a, file.explain.take());
            commands::explain(a)
        }
        Command::Stats(mut a) => {
            layer(&mut a, file.stats.take());
            commands::stats(a)
        }
        Command::Serve(mut a) => {
            layer(&mut a, file.serve.take());
            commands::serve(a)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
