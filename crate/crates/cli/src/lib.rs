//! Command-line front end: data collection, exploration, training and
//! evaluation of the forecasting models.

mod commands;
pub mod pipeline;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stockcast::datapipe::DataError;
use stockcast::marketdata::ApiError;
use stockcast::training::TrainError;
use stockcast::zoo::ModelError;

use pipeline::{Arch, DataArgs, TrainArgs, WindowArgs};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stockcast", version, about = "Stock price forecasting with a CNN-LSTM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Download a daily series and cache it as CSV.
    Fetch(FetchArgs),
    /// Normalize an external CSV into the data directory.
    Import(ImportArgs),
    /// Summary statistics, moving averages, daily returns and a close plot.
    Explore(ExploreArgs),
    /// Window, split and scale a series; report the partitions.
    Preprocess(PreprocessArgs),
    /// Train a model and save it with its history and test report.
    Train(TrainCmd),
    /// Score a saved model on a series.
    Evaluate(EvaluateArgs),
    /// One-step-ahead predictions, optionally followed by a free-running forecast.
    Predict(PredictArgs),
    /// Train the CNN-LSTM and the LSTM baseline on the same split.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Compact,
    Full,
}

#[derive(Debug, Args, Serialize)]
pub struct FetchArgs {
    #[arg(long)]
    pub symbol: String,
    /// Serve responses from recorded JSON files in this directory.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    pub mode: Mode,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub max_retries: usize,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
    pub ma_windows: Vec<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long)]
    pub no_clean: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_enum, default_value_t = Arch::CnnLstm)]
    pub arch: Arch,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    /// The held-out partition the model was trained without.
    Test,
    /// Every window of the series.
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    /// Evaluate the samples in a seeded random order.
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Free-running steps to forecast past the end of the series.
    #[arg(long, default_value_t = 0)]
    pub steps: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Numeric(anyhow::Error),
}

impl CliError {
    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        CliError::Input(e.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            CliError::Input(e) | CliError::Numeric(e) => e,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<TrainError>() {
            Some(TrainError::NonFinite { .. }) => CliError::Numeric(e),
            _ => CliError::Input(e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        anyhow::Error::from(e).into()
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.into())
            }
        }
    )*};
}

input_error!(DataError, ModelError, ApiError, std::io::Error, serde_json::Error);

/// Runs one command; the config echo goes to stderr so stdout stays parseable.
pub fn run(cli: Cli) -> Result<(), CliError> {
    eprintln!("config: {}", serde_json::to_string(&cli.command)?);
    match cli.command {
        Command::Fetch(a) => commands::fetch(&a).map(|_| ()),
        Command::Import(a) => commands::import(&a),
        Command::Explore(a) => commands::explore(&a),
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a).map(|_| ()),
        Command::Predict(a) => commands::predict(&a),
        Command::Compare(a) => commands::compare(&a),
    }
}
