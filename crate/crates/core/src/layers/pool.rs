use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

use super::expect_rank;

/// Winning position (0..4, row-major within the 2x2 window) for every pooled
/// output, plus the input shape it was taken from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input: Shape,
    winners: Vec<u8>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> &Shape {
        &self.input
    }

    pub fn winners(&self) -> &[u8] {
        &self.winners
    }
}

/// Non-overlapping 2x2 max pooling. Ties go to the first element in
/// row-major window order.
pub fn maxpool2x2_forward(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    expect_rank(x, 4, "maxpool2x2")?;
    let &[b, c, h, w] = x.dims() else { unreachable!() };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("maxpool2x2 needs even extents, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(Shape::new([b, c, oh, ow])?);
    let mut winners = vec![0u8; out.len()];
    let src = x.data();
    for (plane, (dst, win)) in out
        .data_mut()
        .chunks_exact_mut(oh * ow)
        .zip(winners.chunks_exact_mut(oh * ow))
        .enumerate()
    {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let window = [src[top], src[top + 1], src[top + w], src[top + w + 1]];
                let mut best = 0;
                for i in 1..4 {
                    if window[i] > window[best] {
                        best = i;
                    }
                }
                dst[oy * ow + ox] = window[best];
                win[oy * ow + ox] = best as u8;
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input: x.shape().clone(),
            winners,
        },
    ))
}

/// Routes each upstream gradient to the position that won the forward max.
pub fn maxpool2x2_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    let &[b, c, h, w] = indices.input.dims() else {
        return Err(Error::shape("pool indices carry a non rank-4 input shape"));
    };
    let (oh, ow) = (h / 2, w / 2);
    if grad_out.dims() != [b, c, oh, ow] || indices.winners.len() != grad_out.len() {
        return Err(Error::shape(format!(
            "pool gradient {} does not match indices for input {}",
            grad_out.shape(),
            indices.input
        )));
    }
    let mut grad_x = Tensor::zeros(indices.input.clone());
    let gx = grad_x.data_mut();
    for (plane, (g, win)) in grad_out
        .data()
        .chunks_exact(oh * ow)
        .zip(indices.winners.chunks_exact(oh * ow))
        .enumerate()
    {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i = oy * ow + ox;
                let pos = win[i] as usize;
                let at = base + (2 * oy + pos / 2) * w + 2 * ox + pos % 2;
                gx[at] += g[i];
            }
        }
    }
    Ok(grad_x)
}
