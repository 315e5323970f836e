use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{gemm_nn, gemm_nt, transpose, Shape, Tensor};

use super::{expect_dims, expect_rank};

/// Square kernel extent used by every convolution.
pub const KERNEL: usize = 5;

/// Weights `[out, in, 5, 5]`, bias `[out]`, and matching gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
}

impl Conv2dParams {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Result<Self> {
        let w = Shape::new([out_channels, in_channels, KERNEL, KERNEL])?;
        let b = Shape::new([out_channels])?;
        Ok(Self {
            weights: Tensor::zeros(w.clone()),
            bias: Tensor::zeros(b.clone()),
            grad_weights: Tensor::zeros(w),
            grad_bias: Tensor::zeros(b),
        })
    }

    /// Weights uniform in `±1/sqrt(in*25)`, zero bias.
    pub fn init(in_channels: usize, out_channels: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(in_channels, out_channels)?;
        let bound = 1.0 / ((in_channels * KERNEL * KERNEL) as f64).sqrt();
        p.weights.data_mut().iter_mut().for_each(|w| *w = rng.symmetric(bound));
        Ok(p)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    fn patch_len(&self) -> usize {
        self.in_channels() * KERNEL * KERNEL
    }
}

struct Geometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn of(x: &Tensor, p: &Conv2dParams) -> Result<Self> {
        expect_rank(x, 4, "conv2d")?;
        let &[batch, channels, height, width] = x.dims() else { unreachable!() };
        if channels != p.in_channels() {
            return Err(Error::shape(format!(
                "conv2d input has {channels} channels, kernel expects {}",
                p.in_channels()
            )));
        }
        if height < KERNEL || width < KERNEL {
            return Err(Error::shape(format!(
                "conv2d input {height}x{width} smaller than the {KERNEL}x{KERNEL} kernel"
            )));
        }
        Ok(Self {
            batch,
            channels,
            height,
            width,
            out_h: height - KERNEL + 1,
            out_w: width - KERNEL + 1,
        })
    }

    fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one image into `[C*25, OH*OW]`, rows ordered `(c, ky, kx)` to match
/// the flattened weight layout.
fn im2col(g: &Geometry, image: &[f64], cols: &mut [f64]) {
    let n = g.positions();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (c * KERNEL + ky) * KERNEL + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let src = &plane[(oy + ky) * g.width + kx..][..g.out_w];
                    dst[oy * g.out_w..(oy + 1) * g.out_w].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
fn col2im(g: &Geometry, cols: &[f64], image: &mut [f64]) {
    let n = g.positions();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (c * KERNEL + ky) * KERNEL + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let dst = &mut plane[(oy + ky) * g.width + kx..][..g.out_w];
                    for (d, s) in dst.iter_mut().zip(&src[oy * g.out_w..(oy + 1) * g.out_w]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Valid (unpadded, stride 1) cross-correlation plus per-channel bias.
///
/// For every output the products are summed in `(c, ky, kx)` order starting
/// from zero and the bias is added last.
pub fn conv2d_forward(x: &Tensor, p: &Conv2dParams) -> Result<Tensor> {
    let g = Geometry::of(x, p)?;
    let (k, n, out_c) = (p.patch_len(), g.positions(), p.out_channels());
    let mut out = Tensor::zeros(Shape::new([g.batch, out_c, g.out_h, g.out_w])?);
    let mut cols = vec![0.0; k * n];
    for b in 0..g.batch {
        im2col(&g, &x.data()[b * g.image_len()..(b + 1) * g.image_len()], &mut cols);
        let y = &mut out.data_mut()[b * out_c * n..(b + 1) * out_c * n];
        gemm_nn(out_c, k, n, p.weights.data(), &cols, y);
        for (plane, &bias) in y.chunks_exact_mut(n).zip(p.bias.data()) {
            plane.iter_mut().for_each(|v| *v += bias);
        }
    }
    Ok(out)
}

fn backward_impl(
    x: &Tensor,
    p: &mut Conv2dParams,
    grad_out: &Tensor,
    want_input_grad: bool,
) -> Result<Option<Tensor>> {
    let g = Geometry::of(x, p)?;
    let (k, n, out_c) = (p.patch_len(), g.positions(), p.out_channels());
    expect_dims(grad_out, &[g.batch, out_c, g.out_h, g.out_w], "conv2d backward")?;

    let mut grad_x = want_input_grad.then(|| Tensor::zeros(x.shape().clone()));
    let mut cols = vec![0.0; k * n];
    let mut grad_cols = vec![0.0; k * n];
    let weights_t = want_input_grad.then(|| transpose(out_c, k, p.weights.data()));
    for b in 0..g.batch {
        let go = &grad_out.data()[b * out_c * n..(b + 1) * out_c * n];
        im2col(&g, &x.data()[b * g.image_len()..(b + 1) * g.image_len()], &mut cols);
        gemm_nt(out_c, n, k, go, &cols, p.grad_weights.data_mut());
        for (gb, plane) in p.grad_bias.data_mut().iter_mut().zip(go.chunks_exact(n)) {
            *gb += plane.iter().sum::<f64>();
        }
        if let (Some(gx), Some(wt)) = (grad_x.as_mut(), weights_t.as_ref()) {
            grad_cols.fill(0.0);
            gemm_nn(k, out_c, n, wt, go, &mut grad_cols);
            col2im(
                &g,
                &grad_cols,
                &mut gx.data_mut()[b * g.image_len()..(b + 1) * g.image_len()],
            );
        }
    }
    Ok(grad_x)
}

/// Accumulates weight and bias gradients into `p` and returns the gradient
/// with respect to `x`.
pub fn conv2d_backward(x: &Tensor, p: &mut Conv2dParams, grad_out: &Tensor) -> Result<Tensor> {
    Ok(backward_impl(x, p, grad_out, true)?.expect("input grad requested"))
}

/// Like [`conv2d_backward`] but skips the input gradient (first layer).
pub fn conv2d_backward_params(x: &Tensor, p: &mut Conv2dParams, grad_out: &Tensor) -> Result<()> {
    backward_impl(x, p, grad_out, false).map(|_| ())
}
