//! Convolutional network training from scratch plus distinctiveness pruning of
//! the fully connected hidden layer.
//!
//! The network is the small two-stage conv/pool model used for MNIST digits:
//!
//! ```text
//! conv(1->20, 5x5) -> relu -> pool 2x2 -> conv(20->40, 5x5) -> relu -> pool 2x2
//!   -> flatten(640) -> dropout(0.25) -> fc(640->H) -> relu -> fc(H->10) -> log-softmax
//! ```
//!
//! Gradients are written out by hand per layer; there is no autograd tape.
//! After training, [`pruning`] measures the angle between every pair of hidden
//! neurons' squashed activation vectors and removes complementary pairs and
//! merges similar ones, producing a smaller network without retraining.
//!
//! Everything is `f64` and single-threaded by default so that runs with the
//! same seed are bit-for-bit reproducible.

pub mod dataset;
pub mod error;
#[cfg(any(test, feature = "gradcheck"))]
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod model;
pub mod optimizer;
pub mod pruning;
pub mod rng;
pub mod tensor;

pub use dataset::{Batch, DataSplit, NormStats, NormalizedDataset, RawDataset};
pub use error::{Error, IdxError, Result};
pub use harness::{evaluate, train, ExperimentRecord, MnistData, RunConfig};
pub use model::{Architecture, Mode, Network, NetworkConfig};
pub use optimizer::Sgd;
pub use pruning::{ActivationMatrix, PruneConfig, PrunePlan, PruneReport};
pub use rng::SeededRng;
pub use tensor::{Shape, Tensor};
