//! Training and evaluation loops, experiment sweeps, and their CSV output.

mod csv_out;
mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::dataset::{self, compute_stats, normalize, FileNames, NormalizedDataset, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::layers::{nll_loss, Mode};
use crate::model::{Network, NetworkConfig};
use crate::optimizer::{zero_grad, Sgd, DEFAULT_LR, DEFAULT_MOMENTUM};
use crate::pruning::PruneReport;
use crate::rng::{SeededRng, Stream};

pub use crate::model::eval::{argmax, count_correct, evaluate, FeatureSet};
pub use csv_out::{
    prune_csv_header, prune_csv_row, run_csv_header, run_csv_row, summarize, write_prune_csv, write_run_csv,
    SizeSummary,
};
pub use sweep::{
    sweep_fc_sizes, sweep_prune_angles, train_models, PruneRow, DEFAULT_ANGLES, DEFAULT_ANGLE_REPEATS,
    DEFAULT_FC_REPEATS, DEFAULT_FC_SIZES,
};

pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_FC_HIDDEN: usize = 400;
/// Environment fallback for the data directory.
pub const DATA_DIR_ENV: &str = "DPRUNE_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub fc_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub data_dir: PathBuf,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fc_hidden: DEFAULT_FC_HIDDEN,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
            momentum: DEFAULT_MOMENTUM,
            seed: 0,
            train_limit: None,
            test_limit: None,
            data_dir: PathBuf::from("data/mnist"),
            output: None,
        }
    }
}

impl RunConfig {
    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::new(self.fc_hidden, self.seed)
    }

    fn validate(&self) -> Result<()> {
        self.network_config()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized train and test splits sharing the training statistics.
#[derive(Debug, Clone)]
pub struct MnistData {
    pub train: NormalizedDataset,
    pub test: NormalizedDataset,
}

impl MnistData {
    pub fn load(dir: &Path, names: &FileNames, train_limit: Option<usize>, test_limit: Option<usize>) -> Result<Self> {
        let (train, test) = dataset::load_mnist(dir, names, train_limit, test_limit)?;
        let stats = compute_stats(&train)?;
        Ok(Self {
            train: normalize(train, stats)?,
            test: normalize(test, stats)?,
        })
    }
}

/// One training run: per-epoch test accuracy and timing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub config: RunConfig,
    pub epoch_accuracies: Vec<f64>,
    pub final_accuracy: f64,
    /// Mean training loss of every mini-batch, in order.
    #[serde(skip)]
    pub batch_losses: Vec<f64>,
    pub seconds: f64,
    pub prune: Option<PruneReport>,
}

/// Trains a fresh network: per epoch, one shuffled pass of
/// `zero_grad -> forward -> nll -> backward -> step` per batch, then a full
/// evaluation on `data.test`.
pub fn train_on(config: &RunConfig, data: &MnistData, run_id: &str) -> Result<(Network, ExperimentRecord)> {
    config.validate()?;
    let start = Instant::now();
    let mut net = Network::init(&config.network_config()?)?;
    let mut opt = Sgd::new(config.lr, config.momentum)?;
    let mut dropout_rng = SeededRng::new(config.seed, Stream::Dropout);
    let mut epoch_accuracies = Vec::with_capacity(config.epochs);
    let mut batch_losses = Vec::new();
    for epoch in 0..config.epochs {
        for batch in data.train.shuffled_batches(epoch as u32, config.seed, config.batch_size) {
            let batch = batch?;
            zero_grad(&mut net);
            let (log_probs, cache) = net.forward(&batch.images, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = nll_loss(&log_probs, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::State(format!("non-finite loss in epoch {}", epoch + 1)));
            }
            net.backward(&cache, &grad)?;
            opt.step(&mut net)?;
            batch_losses.push(loss);
        }
        let acc = evaluate(&net, &data.test)?;
        log::info!("{run_id}: epoch {} test accuracy {:.4}", epoch + 1, acc);
        epoch_accuracies.push(acc);
    }
    let final_accuracy = match epoch_accuracies.last() {
        Some(&a) => a,
        None => evaluate(&net, &data.test)?,
    };
    let record = ExperimentRecord {
        run_id: run_id.to_string(),
        config: config.clone(),
        epoch_accuracies,
        final_accuracy,
        batch_losses,
        seconds: start.elapsed().as_secs_f64(),
        prune: None,
    };
    Ok((net, record))
}

/// Loads the data named by `config` and trains.
pub fn train(config: &RunConfig) -> Result<(Network, ExperimentRecord)> {
    let data = MnistData::load(&config.data_dir, &FileNames::default(), config.train_limit, config.test_limit)?;
    train_on(config, &data, &format!("fc{}-s{}", config.fc_hidden, config.seed))
}
