use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dprune_core::harness::{DATA_DIR_ENV, DEFAULT_EPOCHS, DEFAULT_FC_HIDDEN};
use dprune_core::pruning::DEFAULT_PATTERN_LIMIT;

/// Train small MNIST convnets and prune their hidden layer by neuron distinctiveness.
#[derive(Debug, Parser)]
#[command(name = "dprune", version, args_override_self = true)]
pub struct Cli {
    /// Read flags from a key=value file; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory holding the four MNIST IDX files (plain or .gz).
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "data/mnist")]
    pub data_dir: PathBuf,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and optionally save it.
    Train(TrainArgs),
    /// Report test accuracy of a saved network.
    Eval(EvalArgs),
    /// Prune a saved network at one angle threshold.
    Prune(PruneArgs),
    /// Train networks over several hidden-layer sizes.
    SweepFc(SweepFcArgs),
    /// Prune trained networks over a grid of angle thresholds.
    SweepAngle(SweepAngleArgs),
    /// Download (or copy) the MNIST files into the data directory and check their sizes.
    FetchData(FetchArgs),
}

/// Limits that fix which images are loaded. Normalization statistics come
/// from the loaded training images, so eval and prune should use the same
/// --train-limit the network was trained with.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Use only the first N training images.
    #[arg(long, value_name = "N")]
    pub train_limit: Option<usize>,
    /// Use only the first N test images.
    #[arg(long, value_name = "N")]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Training epochs.
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// SGD learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// SGD momentum.
    #[arg(long, default_value_t = 0.05)]
    pub momentum: f64,
    /// Seed for initialization, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Hidden (fully connected) layer size, 10 < H < 640.
    #[arg(long = "fc", default_value_t = DEFAULT_FC_HIDDEN)]
    pub fc_hidden: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the trained model here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the run as CSV (header, run row, summary row).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Fill the seconds column of the CSV.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Angle threshold in degrees, strictly between 0 and 90.
    #[arg(long)]
    pub angle: f64,
    /// Training images used to measure activations.
    #[arg(long, default_value_t = DEFAULT_PATTERN_LIMIT)]
    pub pattern_limit: usize,
    #[command(flatten)]
    pub data: DataArgs,
    /// Append one report row to this CSV (header written if the file is new).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Write the pruned model here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the full plan (pairs, angles, norms) as JSON.
    #[arg(long, value_name = "FILE")]
    pub detail: Option<PathBuf>,
    /// Run id for the report row; defaults to the model file stem.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepFcArgs {
    /// Comma-separated hidden sizes.
    #[arg(long, value_delimiter = ',', default_values_t = dprune_core::harness::DEFAULT_FC_SIZES)]
    pub sizes: Vec<usize>,
    /// Networks per size; repeat r uses seed + r.
    #[arg(long, default_value_t = dprune_core::harness::DEFAULT_FC_REPEATS)]
    pub repeats: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Worker threads; 1 runs everything in order on this thread.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output file (stdout if omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Fill the seconds column (makes the CSV differ between runs).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SweepAngleArgs {
    /// Comma-separated angle thresholds in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = dprune_core::harness::DEFAULT_ANGLES)]
    pub angles: Vec<f64>,
    /// Comma-separated model files to prune; if omitted, networks are trained first.
    #[arg(long, value_delimiter = ',', value_name = "FILES")]
    pub models: Vec<PathBuf>,
    /// Networks to train when --models is not given; repeat r uses seed + r.
    #[arg(long, default_value_t = dprune_core::harness::DEFAULT_ANGLE_REPEATS)]
    pub repeats: usize,
    /// Hidden size of the networks trained when --models is not given.
    #[arg(long = "fc", default_value_t = DEFAULT_FC_HIDDEN)]
    pub fc_hidden: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Training images used to measure activations.
    #[arg(long, default_value_t = DEFAULT_PATTERN_LIMIT)]
    pub pattern_limit: usize,
    /// Save freshly trained networks into this directory.
    #[arg(long, value_name = "DIR")]
    pub save_models: Option<PathBuf>,
    /// Worker threads; 1 runs everything in order on this thread.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output file (stdout if omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Base URL or local directory holding the four `.gz` files.
    #[arg(long, default_value = crate::fetch::DEFAULT_SOURCE)]
    pub source: String,
}
