use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::expect_rank;

/// Row-wise `x - max(x) - ln(sum(exp(x - max(x))))`.
pub fn log_softmax_forward(x: &Tensor) -> Result<Tensor> {
    expect_rank(x, 2, "log_softmax")?;
    let classes = x.dims()[1];
    let mut y = x.clone();
    for row in y.data_mut().chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v = *v - max - log_sum);
    }
    Ok(y)
}

/// Given the forward output `y`, returns `g - softmax(x) * sum(g)` per row.
pub fn log_softmax_backward(y: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    expect_rank(y, 2, "log_softmax backward")?;
    if y.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "log_softmax backward: output {} vs gradient {}",
            y.shape(),
            grad_out.shape()
        )));
    }
    let classes = y.dims()[1];
    let mut gx = grad_out.clone();
    for (grow, yrow) in gx.data_mut().chunks_exact_mut(classes).zip(y.data().chunks_exact(classes)) {
        let total: f64 = grow.iter().sum();
        grow.iter_mut().zip(yrow).for_each(|(g, y)| *g -= y.exp() * total);
    }
    Ok(gx)
}

/// Mean negative log-likelihood over the batch and its gradient with respect
/// to `log_probs`.
pub fn nll_loss(log_probs: &Tensor, targets: &[u8]) -> Result<(f64, Tensor)> {
    expect_rank(log_probs, 2, "nll_loss")?;
    let &[batch, classes] = log_probs.dims() else { unreachable!() };
    if targets.len() != batch {
        return Err(Error::shape(format!(
            "{} targets for a batch of {batch}",
            targets.len()
        )));
    }
    let scale = 1.0 / batch as f64;
    let mut grad = Tensor::zeros(log_probs.shape().clone());
    let mut loss = 0.0;
    for (b, &t) in targets.iter().enumerate() {
        let t = t as usize;
        if t >= classes {
            return Err(Error::Label { label: t, classes });
        }
        loss -= log_probs.data()[b * classes + t];
        grad.data_mut()[b * classes + t] = -scale;
    }
    Ok((loss * scale, grad))
}
