//! MNIST loading, global mean/std normalization, and shuffled mini-batches.

mod idx;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

pub use idx::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, IMAGES_MAGIC,
    IMAGE_PIXELS, IMAGE_SIDE, LABELS_MAGIC,
};

use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Tensor;

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const TRAIN_SIZE: usize = 60_000;
pub const TEST_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataSplit {
    Train,
    Test,
}

/// File names of the four IDX files inside a data directory. A `.gz` sibling
/// is used when the plain file is absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileNames {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
}

impl Default for FileNames {
    fn default() -> Self {
        Self {
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
        }
    }
}

impl FileNames {
    pub fn for_split(&self, split: DataSplit) -> (&str, &str) {
        match split {
            DataSplit::Train => (&self.train_images, &self.train_labels),
            DataSplit::Test => (&self.test_images, &self.test_labels),
        }
    }
}

/// Undecoded pixels (0-255) and digit labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    split: DataSplit,
}

impl RawDataset {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>, split: DataSplit) -> Result<Self> {
        if pixels.len() != labels.len() * IMAGE_PIXELS {
            return Err(Error::shape(format!(
                "{} pixels for {} labels",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Label {
                label: l as usize,
                classes: 10,
            });
        }
        Ok(Self {
            pixels,
            labels,
            split,
        })
    }

    /// Reads one split from `dir`, decompressing `.gz` files transparently.
    pub fn load(dir: &Path, names: &FileNames, split: DataSplit) -> Result<Self> {
        let (img_name, lab_name) = names.for_split(split);
        let (img_path, img_bytes) = read_maybe_gz(&dir.join(img_name))?;
        let pixels = parse_idx_images(&img_bytes).map_err(|source| Error::Idx {
            context: img_path.display().to_string(),
            source,
        })?;
        let (lab_path, lab_bytes) = read_maybe_gz(&dir.join(lab_name))?;
        let labels = parse_idx_labels(&lab_bytes).map_err(|source| Error::Idx {
            context: lab_path.display().to_string(),
            source,
        })?;
        Self::new(pixels, labels, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> DataSplit {
        self.split
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    /// The first `limit` items (all of them if `limit` is `None` or larger).
    pub fn truncated(mut self, limit: Option<usize>) -> Self {
        if let Some(n) = limit.filter(|&n| n < self.len()) {
            self.labels.truncate(n);
            self.pixels.truncate(n * IMAGE_PIXELS);
        }
        self
    }
}

fn read_maybe_gz(path: &Path) -> Result<(PathBuf, Vec<u8>)> {
    let gz = {
        let mut p = path.as_os_str().to_owned();
        p.push(".gz");
        PathBuf::from(p)
    };
    let (path, compressed) = if path.exists() {
        (path.to_path_buf(), path.extension().is_some_and(|e| e == "gz"))
    } else if gz.exists() {
        (gz, true)
    } else {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found (also tried .gz)"),
        ));
    };
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if !compressed {
        return Ok((path, raw));
    }
    let mut out = Vec::new();
    GzDecoder::new(raw.as_slice())
        .read_to_end(&mut out)
        .map_err(|e| Error::io(&path, e))?;
    Ok((path, out))
}

/// Loads train and test splits, each optionally truncated.
pub fn load_mnist(
    dir: &Path,
    names: &FileNames,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> Result<(RawDataset, RawDataset)> {
    let train = RawDataset::load(dir, names, DataSplit::Train)?.truncated(train_limit);
    let test = RawDataset::load(dir, names, DataSplit::Test)?.truncated(test_limit);
    Ok((train, test))
}

/// Global pixel statistics on the `[0, 1]` scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl NormStats {
    pub fn normalize(&self, pixel: u8) -> f64 {
        (pixel as f64 / 255.0 - self.mean) / self.std
    }

    /// Inverse of [`NormStats::normalize`], returning the `[0, 1]`-scaled pixel.
    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.std + self.mean
    }
}

/// Mean and population standard deviation of every pixel scaled to `[0, 1]`.
///
/// Pixels are integers, so the sums are kept exact in integers and only the
/// final ratios are rounded.
pub fn compute_stats(train: &RawDataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::Empty("cannot compute statistics of an empty dataset".into()));
    }
    let (mut sum, mut sum_sq) = (0u128, 0u128);
    for &p in &train.pixels {
        sum += p as u128;
        sum_sq += (p as u128) * (p as u128);
    }
    let n = train.pixels.len() as u128;
    // n^2 * var * 255^2 = n * sum(p^2) - sum(p)^2
    let spread = n * sum_sq - sum * sum;
    if spread == 0 {
        return Err(Error::DegenerateData("every pixel has the same value".into()));
    }
    let mean = sum as f64 / (255.0 * n as f64);
    let std = (spread as f64).sqrt() / (255.0 * n as f64);
    Ok(NormStats { mean, std })
}

/// A split plus the (training-set) statistics used to normalize it.
///
/// Pixels stay as bytes; the 256 possible normalized values are tabulated and
/// tensors are materialized per batch.
#[derive(Debug, Clone)]
pub struct NormalizedDataset {
    raw: RawDataset,
    stats: NormStats,
    table: [f64; 256],
}

pub fn normalize(raw: RawDataset, stats: NormStats) -> Result<NormalizedDataset> {
    if !(stats.std > 0.0 && stats.std.is_finite() && stats.mean.is_finite()) {
        return Err(Error::DegenerateData(format!("unusable statistics {stats:?}")));
    }
    let mut table = [0.0; 256];
    for (p, slot) in table.iter_mut().enumerate() {
        *slot = stats.normalize(p as u8);
    }
    Ok(NormalizedDataset { raw, stats, table })
}

/// One mini-batch: images `[b, 1, 28, 28]`, labels, and dataset indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub indices: Vec<usize>,
}

impl NormalizedDataset {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn stats(&self) -> NormStats {
        self.stats
    }

    pub fn raw(&self) -> &RawDataset {
        &self.raw
    }

    pub fn labels(&self) -> &[u8] {
        self.raw.labels()
    }

    /// Normalized tensor `[indices.len(), 1, 28, 28]` for the given items.
    pub fn images(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Empty("no indices selected".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::shape(format!("index {i} beyond dataset of {}", self.len())));
            }
            data.extend(self.raw.image(i).iter().map(|&p| self.table[p as usize]));
        }
        Tensor::from_vec(&[indices.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data)
    }

    pub fn batch(&self, indices: Vec<usize>) -> Result<Batch> {
        Ok(Batch {
            images: self.images(&indices)?,
            labels: indices.iter().map(|&i| self.raw.labels[i]).collect(),
            indices,
        })
    }

    /// Batches in dataset order (evaluation).
    pub fn sequential_batches(&self, batch_size: usize) -> impl Iterator<Item = Result<Batch>> + '_ {
        let order: Vec<usize> = (0..self.len()).collect();
        BatchIter::new(self, order, batch_size)
    }

    /// One epoch's batches in a permutation fixed by `(seed, epoch)`.
    pub fn shuffled_batches(
        &self,
        epoch: u32,
        seed: u64,
        batch_size: usize,
    ) -> impl Iterator<Item = Result<Batch>> + '_ {
        BatchIter::new(self, shuffled_indices(self.len(), epoch, seed), batch_size)
    }
}

/// Fisher-Yates permutation of `0..n` driven by the epoch's shuffle stream.
pub fn shuffled_indices(n: usize, epoch: u32, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed, Stream::Shuffle { epoch }).shuffle(&mut order);
    order
}

struct BatchIter<'a> {
    data: &'a NormalizedDataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl<'a> BatchIter<'a> {
    fn new(data: &'a NormalizedDataset, order: Vec<usize>, batch_size: usize) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        Self {
            data,
            order,
            batch_size,
            next: 0,
        }
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let indices = self.order[self.next..end].to_vec();
        self.next = end;
        Some(self.data.batch(indices))
    }
}
