//! SGD with momentum.

use crate::error::{Error, Result};
use crate::model::Network;
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 0.01;
pub const DEFAULT_MOMENTUM: f64 = 0.05;

/// Anything exposing `(parameter, gradient)` tensor pairs in a stable order.
pub trait Parameters {
    fn param_pairs(&mut self) -> Vec<(&mut Tensor, &mut Tensor)>;
}

impl Parameters for Network {
    fn param_pairs(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        self.param_pairs_mut()
    }
}

/// Clears every gradient buffer. Parameters and velocities are untouched.
pub fn zero_grad(model: &mut impl Parameters) {
    for (_, g) in model.param_pairs() {
        g.fill(0.0);
    }
}

/// `v <- momentum * v + g; p <- p - lr * v` (no dampening, no Nesterov).
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Applies one update. Velocity buffers are created (zeroed) on first use.
    pub fn step(&mut self, model: &mut impl Parameters) -> Result<()> {
        let pairs = model.param_pairs();
        if self.velocity.is_empty() {
            self.velocity = pairs.iter().map(|(p, _)| Tensor::zeros(p.shape().clone())).collect();
        }
        if self.velocity.len() != pairs.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} blocks, model has {}",
                self.velocity.len(),
                pairs.len()
            )));
        }
        for ((p, g), v) in pairs.into_iter().zip(&mut self.velocity) {
            if p.shape() != v.shape() || g.shape() != v.shape() {
                return Err(Error::State("parameter shapes changed under the optimizer".into()));
            }
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv + gv;
                *pv -= self.lr * *vv;
            }
        }
        Ok(())
    }
}

impl Default for Sgd {
    fn default() -> Self {
        Self::new(DEFAULT_LR, DEFAULT_MOMENTUM).expect("defaults are valid")
    }
}
