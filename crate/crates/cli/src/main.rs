//! `ksttm` command-line interface.
//!
//! Every failure prints one line `error[<category>]: <message>` on stderr and
//! exits with the category's code (see [`exit_code`]).

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use args::{ConfigArgs, DataArgs, GridArgs};
use ksttm::Error;

#[derive(Parser, Debug)]
#[command(name = "ksttm", version, about = "Kernel SVMs on tensor-train compressed tensors")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose tensors and report rank chains and reconstruction error.
    TtSvd(TtSvdArgs),
    /// Gram matrix of jointly decomposed samples as CSV plus a JSON sidecar.
    Gram(GramArgs),
    /// Grid-search and train a one-vs-one model, then save it.
    Train(TrainArgs),
    /// Predict class ids with a saved model.
    Predict(PredictArgs),
    /// Score a saved model on labelled samples.
    Evaluate(EvaluateArgs),
    /// Binary grid search; prints the winner and its test accuracy.
    Grid(GridCmdArgs),
    /// Best test accuracy per rank setting, as CSV.
    RankSweep(RankSweepArgs),
    /// Time the naive and fast kernel evaluators.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// `.ttn` container or IDX image file.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Sample dims; IDX files default to their own image dims.
    #[arg(long, value_delimiter = ',', value_name = "DIMS")]
    pub reshape: Option<Vec<usize>>,
    /// Use only the first N samples.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TtSvdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Relative Frobenius error budget.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Interior rank caps, one per split.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub ranks: Option<Vec<usize>>,
    /// Decompose all samples jointly with one shared rank chain.
    #[arg(long)]
    pub stacked: bool,
    /// Write reconstructions as a `.ttn` file.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GramArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub ranks: Option<Vec<usize>>,
    /// Kernel kind for every mode: rbf, linear, poly:<c>:<degree>.
    #[arg(long, default_value = "rbf", conflicts_with = "per_mode")]
    pub kernel: String,
    /// Kernel kind per mode.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub per_mode: Option<Vec<String>>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value = "prod")]
    pub combine: String,
    /// CSV destination; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// JSON sidecar destination; defaults to `<output>.json`.
    #[arg(long, value_name = "PATH")]
    pub sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Model file to write.
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
    /// Write (alpha, b, objective) of every final fit as JSON.
    #[arg(long, value_name = "PATH")]
    pub dump_solution: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Also write one predicted id per line to this file.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Include per-pair decision values.
    #[arg(long)]
    pub decisions: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Images (IDX or `.ttn`); defaults to the configured test images.
    #[arg(long, value_name = "PATH")]
    pub images: Option<PathBuf>,
    /// Labels (IDX or text); defaults to the configured test labels.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Confusion matrix CSV destination.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridCmdArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Every scored grid point as CSV.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Save the winning model.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dump_solution: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RankSweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Uniform interior ranks to sweep.
    #[arg(long, value_delimiter = ',', value_name = "LIST", required = true)]
    pub ranks: Vec<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Tensor orders.
    #[arg(long = "d", value_delimiter = ',', default_value = "3", value_name = "LIST")]
    pub orders: Vec<usize>,
    /// Mode size.
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    /// Interior ranks.
    #[arg(long, value_delimiter = ',', default_value = "4", value_name = "LIST")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value = "rbf")]
    pub kernel: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value = "prod")]
    pub combine: String,
    #[arg(long)]
    pub fast_only: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code and category per error kind.
pub fn exit_code(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Io(_) => (3, "io"),
        Error::Config(_) => (4, "config"),
        Error::Format(_) | Error::Checksum { .. } | Error::Version(_) | Error::Json(_) => (5, "format"),
        Error::Numerical(_) => (6, "numerical"),
        Error::Argument(_) => (7, "argument"),
        Error::Capacity(_) => (8, "capacity"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::TtSvd(a) => commands::tt_svd(a),
        Command::Gram(a) => commands::gram(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Grid(a) => commands::grid(a),
        Command::RankSweep(a) => commands::rank_sweep(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = exit_code(&e);
            eprintln!("error[{category}]: {}", e.to_string().replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
