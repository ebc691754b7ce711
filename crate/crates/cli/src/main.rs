mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emoblend::Error;
use serde_json::json;

use crate::config::{DataArgs, ModelArgs};

/// Emotion classification of software-engineering text, with and without
/// polarity-word augmentation.
#[derive(Parser)]
#[command(name = "emoblend", version)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "EMOBLEND_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a dataset, print its label distribution.
    Prepare(PrepareArgs),
    /// Write the polarity words of every utterance as JSONL.
    ExtractPolarity(ExtractArgs),
    /// Train six one-vs-all classifiers on one seeded split.
    Train(TrainArgs),
    /// Score a trained bundle or a predictions file against gold labels.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over several seeds and aggregate.
    Experiment(ExperimentArgs),
    /// Compare reports with each other or with a published reference row.
    Compare(CompareArgs),
    /// Errors shared by all given models, with optional category annotations.
    Errors(ErrorsArgs),
    /// Write a synthetic corpus or the bundled fixture lexicon.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also write the validated dataset here (format from the extension).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, env = "EMOBLEND_LEXICON")]
    lexicon: PathBuf,
    #[arg(long, env = "EMOBLEND_TAU", default_value_t = emoblend::lexicon::DEFAULT_TAU)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, env = "EMOBLEND_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory holding model.json, vocab.txt and the checkpoints.
    #[arg(
        long,
        conflicts_with = "predictions",
        required_unless_present = "predictions"
    )]
    model: Option<PathBuf>,
    /// Predictions CSV to score instead of running a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// split.json from a training run; only its test portion is scored.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, env = "EMOBLEND_LEXICON")]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated seeds.
    #[arg(long, env = "EMOBLEND_SEEDS", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// report.json files; deltas are taken against the first.
    reports: Vec<PathBuf>,
    /// Reference row key, e.g. bert-github.
    #[arg(long)]
    reference: Option<String>,
    /// Reference table JSON replacing the bundled one.
    #[arg(long)]
    reference_file: Option<PathBuf>,
    /// Print the available reference keys and exit.
    #[arg(long)]
    list_references: bool,
    /// Write the comparison as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ErrorsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Predictions CSV of one model; repeat for each model.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    /// `case_id,category` CSV.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Predictions of the augmented models, for the resolution report.
    #[arg(long = "after")]
    after: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    /// separable, diluted, github, stackoverflow or lexicon.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// 2 for bad input or configuration, 3 for training failures, 4 for
/// incompatible artifacts, 1 otherwise.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Validation(_)
        | Error::Lookup { .. }
        | Error::Input(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::Training { .. } => 3,
        Error::Compatibility(_) => 4,
        _ => 1,
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    });
    match e {
        Error::Parse { line, .. } => v["line"] = json!(line),
        Error::Training { emotion, epoch, .. } => {
            v["emotion"] = json!(emotion);
            v["epoch"] = json!(epoch);
        }
        Error::Lookup { available, .. } => v["available"] = json!(available),
        _ => {}
    }
    v
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    let result = emoblend::harness::with_jobs(jobs, move || match cli.command {
        Command::Prepare(a) => commands::prepare(&a),
        Command::ExtractPolarity(a) => commands::extract_polarity(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Experiment(a) => commands::experiment(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Errors(a) => commands::errors(&a),
        Command::Synth(a) => commands::synth(&a),
    })
    .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
