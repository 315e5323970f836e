//! The conv/pool/dense network, its initialization, and forward/backward
//! passes over whole batches.

pub mod eval;
mod io;

use crate::error::{Error, Result};
use crate::layers::{
    conv2d_backward, conv2d_backward_params, conv2d_forward, linear_backward, linear_forward,
    log_softmax_backward, log_softmax_forward, maxpool2x2_backward, maxpool2x2_forward,
    relu_backward, relu_forward, Conv2dParams, DropoutState, LinearParams, PoolIndices, KERNEL,
};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Tensor;

pub use crate::layers::Mode;
pub use io::{MODEL_MAGIC, MODEL_VERSION};

pub const INPUT_SIDE: usize = 28;
pub const CLASSES: usize = 10;
pub const CONV_CHANNELS: [usize; 2] = [20, 40];
pub const DROPOUT_RATE: f64 = 0.25;
/// Flattened conv feature width feeding the hidden layer: 40 * 4 * 4.
pub const FEATURES: usize = 640;

/// Fully connected hidden size and the seed that fixes initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub fc_hidden: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(fc_hidden: usize, seed: u64) -> Result<Self> {
        let cfg = Self { fc_hidden, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The hidden layer must be narrower than the 640 features feeding it and
    /// wider than the 10 outputs it feeds.
    pub fn validate(&self) -> Result<()> {
        if self.fc_hidden <= CLASSES || self.fc_hidden >= FEATURES {
            return Err(Error::Config(format!(
                "fc_hidden {} must satisfy {CLASSES} < H < {FEATURES}",
                self.fc_hidden
            )));
        }
        Ok(())
    }
}

/// Layer sizes. [`Architecture::mnist`] is the real model; [`Architecture::toy`]
/// is a one-conv 8x8 variant small enough for full-network gradient checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn mnist(hidden: usize) -> Self {
        Self {
            input_side: INPUT_SIDE,
            conv_channels: CONV_CHANNELS.to_vec(),
            hidden,
            classes: CLASSES,
        }
    }

    /// 1x8x8 input, conv(1->2) -> pool -> 8 features -> fc(8->hidden) -> fc(hidden->10).
    pub fn toy(hidden: usize) -> Self {
        Self {
            input_side: 8,
            conv_channels: vec![2],
            hidden,
            classes: CLASSES,
        }
    }

    pub fn is_mnist(&self) -> bool {
        self.input_side == INPUT_SIDE
            && self.conv_channels == CONV_CHANNELS
            && self.classes == CLASSES
    }

    /// Spatial side after every conv/pool stage, or `None` if a stage does not fit.
    fn final_side(&self) -> Option<usize> {
        self.conv_channels.iter().try_fold(self.input_side, |side, _| {
            let conv = side.checked_sub(KERNEL - 1).filter(|&s| s >= 1)?;
            (conv % 2 == 0).then_some(conv / 2)
        })
    }

    pub fn features(&self) -> usize {
        let side = self.final_side().unwrap_or(0);
        self.conv_channels.last().copied().unwrap_or(1) * side * side
    }

    fn validate(&self) -> Result<()> {
        if self.final_side().is_none_or(|s| s == 0) || self.conv_channels.is_empty() {
            return Err(Error::Config(format!("conv stack does not fit the input: {self:?}")));
        }
        if self.hidden == 0 || self.classes == 0 {
            return Err(Error::Config("hidden and class counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    pub convs: Vec<Conv2dParams>,
    pub dropout: DropoutState,
    pub fc1: LinearParams,
    pub fc2: LinearParams,
}

/// Per-stage intermediates kept for backward.
#[derive(Debug, Clone)]
struct ConvStageCache {
    input: Tensor,
    pre_relu: Tensor,
    pool: PoolIndices,
}

/// Everything [`Network::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    stages: Vec<ConvStageCache>,
    last_pool_dims: Vec<usize>,
    features: Tensor,
    dropout: DropoutState,
    dropped: Tensor,
    fc1_pre: Tensor,
    fc1_post: Tensor,
    log_probs: Tensor,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Flattened conv features `[B, 640]`, before dropout.
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Hidden layer output before ReLU, `[B, H]`.
    pub fn fc1_pre_relu(&self) -> &Tensor {
        &self.fc1_pre
    }

    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }
}

impl Network {
    /// The standard network with weights uniform in `±1/sqrt(fan_in)` and zero biases.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        Self::with_architecture(Architecture::mnist(config.fc_hidden), config.seed)
    }

    pub fn with_architecture(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = SeededRng::new(seed, Stream::Init);
        let mut convs = Vec::with_capacity(arch.conv_channels.len());
        let mut in_ch = 1;
        for &out_ch in &arch.conv_channels {
            convs.push(Conv2dParams::init(in_ch, out_ch, &mut rng)?);
            in_ch = out_ch;
        }
        let fc1 = LinearParams::init(arch.features(), arch.hidden, &mut rng)?;
        let fc2 = LinearParams::init(arch.hidden, arch.classes, &mut rng)?;
        Ok(Self {
            dropout: DropoutState::new(DROPOUT_RATE)?,
            arch,
            convs,
            fc1,
            fc2,
        })
    }

    /// Assembles a network from explicit parameter blocks, checking that they chain.
    pub fn from_parts(
        arch: Architecture,
        convs: Vec<Conv2dParams>,
        fc1: LinearParams,
        fc2: LinearParams,
    ) -> Result<Self> {
        arch.validate()?;
        let mut in_ch = 1;
        if convs.len() != arch.conv_channels.len() {
            return Err(Error::shape("conv stage count does not match architecture"));
        }
        for (p, &out_ch) in convs.iter().zip(&arch.conv_channels) {
            if p.in_channels() != in_ch || p.out_channels() != out_ch {
                return Err(Error::shape(format!(
                    "conv block {}->{} where {in_ch}->{out_ch} expected",
                    p.in_channels(),
                    p.out_channels()
                )));
            }
            in_ch = out_ch;
        }
        if fc1.in_features() != arch.features() || fc1.out_features() != arch.hidden {
            return Err(Error::shape("fc1 does not match architecture"));
        }
        if fc2.in_features() != arch.hidden || fc2.out_features() != arch.classes {
            return Err(Error::shape("fc2 does not match architecture"));
        }
        Ok(Self {
            dropout: DropoutState::new(DROPOUT_RATE)?,
            arch,
            convs,
            fc1,
            fc2,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn hidden_size(&self) -> usize {
        self.arch.hidden
    }

    pub fn parameter_count(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in the fixed block order (conv weights/bias per stage,
    /// then fc1, fc2).
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.extend([&c.weights, &c.bias]);
        }
        out.extend([&self.fc1.weights, &self.fc1.bias, &self.fc2.weights, &self.fc2.bias]);
        out
    }

    /// Gradient buffers in the same order as [`Network::param_tensors`].
    pub fn grad_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.extend([&c.grad_weights, &c.grad_bias]);
        }
        out.extend([
            &self.fc1.grad_weights,
            &self.fc1.grad_bias,
            &self.fc2.grad_weights,
            &self.fc2.grad_bias,
        ]);
        out
    }

    /// `(parameter, gradient)` pairs in block order.
    pub fn param_pairs_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push((&mut c.weights, &mut c.grad_weights));
            out.push((&mut c.bias, &mut c.grad_bias));
        }
        out.push((&mut self.fc1.weights, &mut self.fc1.grad_weights));
        out.push((&mut self.fc1.bias, &mut self.fc1.grad_bias));
        out.push((&mut self.fc2.weights, &mut self.fc2.grad_weights));
        out.push((&mut self.fc2.bias, &mut self.fc2.grad_bias));
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let s = self.arch.input_side;
        match x.dims() {
            &[b, 1, h, w] if h == s && w == s => Ok(b),
            _ => Err(Error::shape(format!(
                "network expects input [B, 1, {s}, {s}], got {}",
                x.shape()
            ))),
        }
    }

    /// Conv stack output flattened to `[B, features]`.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        let mut h = x.clone();
        for conv in &self.convs {
            h = maxpool2x2_forward(&relu_forward(&conv2d_forward(&h, conv)?))?.0;
        }
        h.reshape(&[batch, self.arch.features()])
    }

    /// Hidden layer pre-activations `[B, H]` from flattened features (eval path).
    pub fn fc1_pre_relu(&self, features: &Tensor) -> Result<Tensor> {
        linear_forward(features, &self.fc1)
    }

    /// Eval-mode output scores before log-softmax.
    pub fn head_logits(&self, features: &Tensor) -> Result<Tensor> {
        let hidden = relu_forward(&linear_forward(features, &self.fc1)?);
        linear_forward(&hidden, &self.fc2)
    }

    /// Eval-mode log-probabilities from flattened features.
    pub fn head(&self, features: &Tensor) -> Result<Tensor> {
        log_softmax_forward(&self.head_logits(features)?)
    }

    /// Eval-mode logits for a batch of images.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.head_logits(&self.features(x)?)
    }

    /// Eval-mode log-probabilities; no cache, no randomness.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.head(&self.features(x)?)
    }

    /// Full forward pass. `rng` drives the dropout mask in training mode and is
    /// untouched in eval mode.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut SeededRng) -> Result<(Tensor, ForwardCache)> {
        let batch = self.check_input(x)?;
        let mut stages = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        for conv in &self.convs {
            let pre_relu = conv2d_forward(&h, conv)?;
            let (pooled, pool) = maxpool2x2_forward(&relu_forward(&pre_relu))?;
            stages.push(ConvStageCache {
                input: h,
                pre_relu,
                pool,
            });
            h = pooled;
        }
        let last_pool_dims = h.dims().to_vec();
        let features = h.reshape(&[batch, self.arch.features()])?;

        let mut dropout = self.dropout.clone();
        dropout.mode = mode;
        let dropped = dropout.forward(&features, rng);
        let fc1_pre = linear_forward(&dropped, &self.fc1)?;
        let fc1_post = relu_forward(&fc1_pre);
        let logits = linear_forward(&fc1_post, &self.fc2)?;
        let log_probs = log_softmax_forward(&logits)?;
        let cache = ForwardCache {
            mode,
            stages,
            last_pool_dims,
            features,
            dropout,
            dropped,
            fc1_pre,
            fc1_post,
            log_probs: log_probs.clone(),
        };
        Ok((log_probs, cache))
    }

    /// Accumulates parameter gradients for `loss_grad = dL/d(log_probs)`.
    pub fn backward(&mut self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<()> {
        if cache.mode != Mode::Train {
            return Err(Error::State("backward needs a training-mode forward cache".into()));
        }
        let g = log_softmax_backward(&cache.log_probs, loss_grad)?;
        let g = linear_backward(&cache.fc1_post, &mut self.fc2, &g)?;
        let g = relu_backward(&cache.fc1_pre, &g)?;
        let g = linear_backward(&cache.dropped, &mut self.fc1, &g)?;
        let g = cache.dropout.backward(&g)?;
        let mut g = g.reshape(&cache.last_pool_dims)?;
        for (i, (stage, conv)) in cache.stages.iter().zip(self.convs.iter_mut()).enumerate().rev() {
            let after_relu = maxpool2x2_backward(&g, &stage.pool)?;
            let pre = relu_backward(&stage.pre_relu, &after_relu)?;
            if i == 0 {
                conv2d_backward_params(&stage.input, conv, &pre)?;
            } else {
                g = conv2d_backward(&stage.input, conv, &pre)?;
            }
        }
        Ok(())
    }
}
