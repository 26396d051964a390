//! `swe`: train LeNet members, evaluate them, fuse them, and run the Monte
//! Carlo comparison.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 bad flags,
//! 3 data/config/input errors, 4 training or evaluation failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swe_core::data::SplitSpec;
use swe_core::ensemble::Method;
use swe_core::network::Variant;
use swe_core::Precision;

pub const DATA_DIR_ENV: &str = "SWE_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "swe", version, about = "Self-weighted ensembles of LeNet classifiers on MNIST")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Standard-output format (default: json for train, text otherwise).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitPreset {
    /// 8000 / 2000 / 2000
    Desk,
    /// 50000 / 10000 / 10000
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, env = DATA_DIR_ENV, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitPreset::Desk)]
    pub split: SplitPreset,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub validation_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
}

impl DataArgs {
    pub fn spec(&self) -> SplitSpec {
        let base = match self.split {
            SplitPreset::Desk => SplitSpec::desk(self.split_seed),
            SplitPreset::Full => SplitSpec::full(self.split_seed),
        };
        SplitSpec {
            train_count: self.train_count.unwrap_or(base.train_count),
            validation_count: self.validation_count.unwrap_or(base.validation_count),
            test_count: self.test_count.unwrap_or(base.test_count),
            ..base
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one member, write its checkpoint and print its reliability.
    Train(TrainArgs),
    /// Per-class and macro F1 of one checkpoint.
    Evaluate(EvaluateArgs),
    /// Fuse the members listed in a manifest and score the result.
    EnsemblePredict(EnsembleArgs),
    /// Run the Monte Carlo comparison and write report files.
    Experiment(ExperimentArgs),
    /// Summarize a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub arch: Variant,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Append the trained member to this ensemble manifest (created if absent).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    pub on: EvalSplit,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Override the manifest's fusion method.
    #[arg(long)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    pub on: EvalSplit,
    #[arg(long, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Write `index,label,predicted` rows here.
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON config; missing keys take the desk preset's values.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// desk, full, full-a, full-b or full-c.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the config's output_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's data_dir.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` or the directory containing it.
    #[arg(long = "in")]
    pub input: PathBuf,
}

/// A failure mapped onto the documented exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Output(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Training(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Output(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let fmt = cli.format.unwrap_or(Format::Text);
    match cli.command {
        Command::Train(a) => commands::train(&a, cli.format.unwrap_or(Format::Json)),
        Command::Evaluate(a) => commands::evaluate(&a, fmt),
        Command::EnsemblePredict(a) => commands::ensemble_predict(&a, fmt),
        Command::Experiment(a) => commands::experiment(&a, fmt),
        Command::Report(a) => commands::report(&a, fmt),
    }
}
