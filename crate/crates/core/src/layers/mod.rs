//! Forward and explicit backward passes for every layer of the network, plus
//! the NLL loss.
//!
//! Backward functions accumulate into the parameter gradient buffers (`+=`);
//! clearing them is the optimizer's job.

mod activation;
mod conv;
mod dropout;
mod linear;
mod loss;
mod pool;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv2d_backward, conv2d_backward_params, conv2d_forward, Conv2dParams, KERNEL};
pub use dropout::{DropoutState, Mode};
pub use linear::{linear_backward, linear_forward, LinearParams};
pub use loss::{log_softmax_backward, log_softmax_forward, nll_loss};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.shape().rank() != rank {
        return Err(Error::shape(format!(
            "{what} expects a rank-{rank} tensor, got {}",
            t.shape()
        )));
    }
    Ok(())
}

pub(crate) fn expect_dims(t: &Tensor, dims: &[usize], what: &str) -> Result<()> {
    if t.dims() != dims {
        return Err(Error::shape(format!(
            "{what} expects shape {dims:?}, got {}",
            t.shape()
        )));
    }
    Ok(())
}
