//! Eval-mode accuracy, either end to end or through the dense head on cached
//! conv features.

use crate::dataset::NormalizedDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Network;

/// Images per forward pass during evaluation; small enough to stay in cache.
pub const EVAL_CHUNK: usize = 100;

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `log_probs` rows whose argmax equals the label.
pub fn count_correct(log_probs: &Tensor, labels: &[u8]) -> usize {
    let classes = log_probs.dims()[1];
    log_probs
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l as usize)
        .count()
}

/// Test accuracy in eval mode (dropout off).
pub fn evaluate(net: &Network, data: &NormalizedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0;
    for batch in data.sequential_batches(EVAL_CHUNK) {
        let batch = batch?;
        correct += count_correct(&net.predict(&batch.images)?, &batch.labels);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Flattened conv features of a whole split, computed once so that networks
/// sharing the conv stack (a model and its pruned variants) can be evaluated
/// through the dense head only.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub features: Vec<Tensor>,
    pub labels: Vec<Vec<u8>>,
    len: usize,
}

impl FeatureSet {
    pub fn compute(net: &Network, data: &NormalizedDataset, limit: Option<usize>) -> Result<Self> {
        let n = limit.map_or(data.len(), |l| l.min(data.len()));
        if n == 0 {
            return Err(Error::Empty("no patterns to compute features for".into()));
        }
        let order: Vec<usize> = (0..n).collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for chunk in order.chunks(EVAL_CHUNK) {
            let batch = data.batch(chunk.to_vec())?;
            features.push(net.features(&batch.images)?);
            labels.push(batch.labels);
        }
        Ok(Self { features, labels, len: n })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Accuracy of `net`'s dense head on these features.
    pub fn accuracy(&self, net: &Network) -> Result<f64> {
        let mut correct = 0;
        for (f, l) in self.features.iter().zip(&self.labels) {
            correct += count_correct(&net.head(f)?, l);
        }
        Ok(correct as f64 / self.len as f64)
    }

    /// Accuracy of a classifier that always answers `class`.
    pub fn constant_accuracy(&self, class: usize) -> f64 {
        let hits: usize = self
            .labels
            .iter()
            .map(|l| l.iter().filter(|&&y| y as usize == class).count())
            .sum();
        hits as f64 / self.len as f64
    }
}
