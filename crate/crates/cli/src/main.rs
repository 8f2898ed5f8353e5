//! `aq`: command-line driver for the argument-quality toolkit.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};

use commands::{
    AggregateArgs, DemoArgs, EvaluateArgs, ExperimentArgs, FeaturesArgs, IaaArgs, IngestArgs, PredictArgs, TrainArgs,
};
use settings::Config;

#[derive(Parser)]
#[command(
    name = "aq",
    version,
    about = "Argument-quality corpora, annotation aggregation, models and evaluation",
    after_help = "Relative input paths are resolved against $AQ_DATA_DIR when it is set.\n\
                  Config files are JSON objects; flags override a subcommand section,\n\
                  which overrides top-level keys."
)]
struct Cli {
    /// JSON config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, length-filter, split and validate a corpus
    Ingest(IngestArgs),
    /// Aggregate annotations into per-document scores
    Aggregate(AggregateArgs),
    /// Krippendorff's alpha and per-annotator blocking
    Iaa(IaaArgs),
    /// Compute document features (tf-idf, mean embeddings, length)
    Features(FeaturesArgs),
    /// Fit a model family with dev-set grid search
    Train(TrainArgs),
    /// Score documents with a trained model
    Predict(PredictArgs),
    /// Correlate predictions with reference scores
    Evaluate(EvaluateArgs),
    /// Run an experiment spec end to end
    Experiment(ExperimentArgs),
    /// Write a synthetic planted-signal dataset
    Demo(DemoArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();

    let result = Config::load(cli.config.as_deref()).and_then(|config| match &cli.command {
        Command::Ingest(a) => commands::ingest(&config.resolve("ingest", a)?),
        Command::Aggregate(a) => commands::aggregate(&config.resolve("aggregate", a)?),
        Command::Iaa(a) => commands::iaa(&config.resolve("iaa", a)?),
        Command::Features(a) => commands::features(&config.resolve("features", a)?),
        Command::Train(a) => commands::train(&config.resolve("train", a)?),
        Command::Predict(a) => commands::predict(&config.resolve("predict", a)?),
        Command::Evaluate(a) => commands::evaluate(&config.resolve("evaluate", a)?),
        Command::Experiment(a) => commands::experiment(&config.resolve("experiment", a)?),
        Command::Demo(a) => commands::demo(&config.resolve("demo", a)?),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // Error types here often inline their source already; skip repeats.
            let mut msg = f.error.to_string();
            for cause in f.error.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}
