use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in training, each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`; in eval it is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutState {
    rate: f64,
    pub mode: Mode,
    mask: Option<Tensor>,
}

impl DropoutState {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self {
            rate,
            mode: Mode::Train,
            mask: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Mask sampled by the most recent training-mode forward.
    pub fn mask(&self) -> Option<&Tensor> {
        self.mask.as_ref()
    }

    pub fn forward(&mut self, x: &Tensor, rng: &mut SeededRng) -> Tensor {
        match self.mode {
            Mode::Eval => {
                self.mask = None;
                x.clone()
            }
            Mode::Train => {
                let keep = 1.0 / (1.0 - self.rate);
                let mut mask = Tensor::zeros(x.shape().clone());
                for m in mask.data_mut() {
                    *m = if rng.next_f64() < self.rate { 0.0 } else { keep };
                }
                let y = x.mul(&mask).expect("mask built from x's shape");
                self.mask = Some(mask);
                y
            }
        }
    }

    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        match (self.mode, &self.mask) {
            (Mode::Eval, _) => Ok(grad_out.clone()),
            (Mode::Train, Some(mask)) => grad_out.mul(mask),
            (Mode::Train, None) => Err(Error::State(
                "dropout backward called before a training forward".into(),
            )),
        }
    }
}
