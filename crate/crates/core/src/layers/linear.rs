use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Shape, Tensor};

use super::expect_rank;

/// Weights `[out, in]`, bias `[out]`, and matching gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
}

impl LinearParams {
    pub fn zeros(in_features: usize, out_features: usize) -> Result<Self> {
        let w = Shape::new([out_features, in_features])?;
        let b = Shape::new([out_features])?;
        Ok(Self {
            weights: Tensor::zeros(w.clone()),
            bias: Tensor::zeros(b.clone()),
            grad_weights: Tensor::zeros(w),
            grad_bias: Tensor::zeros(b),
        })
    }

    /// Weights uniform in `±1/sqrt(in)`, zero bias.
    pub fn init(in_features: usize, out_features: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(in_features, out_features)?;
        let bound = 1.0 / (in_features as f64).sqrt();
        p.weights.data_mut().iter_mut().for_each(|w| *w = rng.symmetric(bound));
        Ok(p)
    }

    /// Builds parameters from explicit weights and bias; gradients start at zero.
    pub fn from_parts(weights: Tensor, bias: Tensor) -> Result<Self> {
        let &[out, _] = weights.dims() else {
            return Err(Error::shape(format!("linear weights must be rank 2, got {}", weights.shape())));
        };
        if bias.dims() != [out] {
            return Err(Error::shape(format!(
                "bias {} does not match {out} outputs",
                bias.shape()
            )));
        }
        Ok(Self {
            grad_weights: Tensor::zeros(weights.shape().clone()),
            grad_bias: Tensor::zeros(bias.shape().clone()),
            weights,
            bias,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims()[0]
    }
}

fn batch_of(x: &Tensor, p: &LinearParams) -> Result<usize> {
    expect_rank(x, 2, "linear")?;
    let &[batch, features] = x.dims() else { unreachable!() };
    if features != p.in_features() {
        return Err(Error::shape(format!(
            "linear layer expects {} input features, got {features}",
            p.in_features()
        )));
    }
    Ok(batch)
}

/// `y = x W^T + b`.
pub fn linear_forward(x: &Tensor, p: &LinearParams) -> Result<Tensor> {
    let batch = batch_of(x, p)?;
    let (inp, out) = (p.in_features(), p.out_features());
    let mut y = Tensor::zeros(Shape::new([batch, out])?);
    gemm_nt(batch, inp, out, x.data(), p.weights.data(), y.data_mut());
    for row in y.data_mut().chunks_exact_mut(out) {
        row.iter_mut().zip(p.bias.data()).for_each(|(v, b)| *v += b);
    }
    Ok(y)
}

/// Accumulates `dW = g^T x`, `db = column sums of g`, returns `dx = g W`.
pub fn linear_backward(x: &Tensor, p: &mut LinearParams, grad_out: &Tensor) -> Result<Tensor> {
    let batch = batch_of(x, p)?;
    let (inp, out) = (p.in_features(), p.out_features());
    if grad_out.dims() != [batch, out] {
        return Err(Error::shape(format!(
            "linear backward expects gradient [{batch}, {out}], got {}",
            grad_out.shape()
        )));
    }
    gemm_tn(out, batch, inp, grad_out.data(), x.data(), p.grad_weights.data_mut());
    for row in grad_out.data().chunks_exact(out) {
        p.grad_bias.data_mut().iter_mut().zip(row).for_each(|(b, g)| *b += g);
    }
    let mut grad_x = Tensor::zeros(x.shape().clone());
    gemm_nn(batch, out, inp, grad_out.data(), p.weights.data(), grad_x.data_mut());
    Ok(grad_x)
}
