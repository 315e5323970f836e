//! Central finite differences for checking hand-written backward passes.
//!
//! Test-only: compiled under `cfg(test)` or the `gradcheck` feature.

/// Step used by every gradient check.
pub const EPS: f64 = 1e-5;

/// Denominator floor for [`relative_error`]; below this magnitude the error
/// is effectively absolute.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

use crate::layers::{
    conv2d_backward, conv2d_forward, linear_backward, linear_forward, log_softmax_backward,
    log_softmax_forward, maxpool2x2_backward, maxpool2x2_forward, nll_loss, relu_backward,
    relu_forward, Conv2dParams, DropoutState, LinearParams, Mode,
};
use crate::model::{Architecture, Network};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Tensor;

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for every coordinate `i`.
pub fn central_difference<F>(x: &[f64], eps: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Largest elementwise [`relative_error`].
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

fn random(dims: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.symmetric(1.0)).collect()).expect("valid dims")
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_vec(t.dims(), data.to_vec()).expect("same length")
}

/// `sum(r * y)`: a random linear functional, so `r` is the upstream gradient.
fn probe(r: &Tensor, y: &Tensor) -> f64 {
    r.dot(y).expect("probe shape")
}

fn numeric(t: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    central_difference(t.data(), EPS, |v| f(&with_data(t, v)))
}

/// Max relative error between analytic and finite-difference gradients of one
/// layer for one random instance.
pub fn check_conv2d(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let x = random(&[2, 2, 8, 8], &mut rng);
    let mut p = Conv2dParams::zeros(2, 3).expect("dims");
    p.weights = random(p.weights.dims(), &mut rng);
    p.bias = random(p.bias.dims(), &mut rng);
    let r = random(&[2, 3, 4, 4], &mut rng);

    let mut analytic = p.clone();
    let gx = conv2d_backward(&x, &mut analytic, &r).expect("backward");

    let nx = numeric(&x, |x| probe(&r, &conv2d_forward(x, &p).unwrap()));
    let nw = numeric(&p.weights, |w| {
        let mut q = p.clone();
        q.weights = w.clone();
        probe(&r, &conv2d_forward(&x, &q).unwrap())
    });
    let nb = numeric(&p.bias, |b| {
        let mut q = p.clone();
        q.bias = b.clone();
        probe(&r, &conv2d_forward(&x, &q).unwrap())
    });
    max_relative_error(gx.data(), &nx)
        .max(max_relative_error(analytic.grad_weights.data(), &nw))
        .max(max_relative_error(analytic.grad_bias.data(), &nb))
}

/// Inputs are drawn so every window's maximum leads the runner-up by more
/// than `100 * EPS`, keeping the probe away from ties.
pub fn check_maxpool(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let dims = [2, 3, 8, 8];
    let mut x = random(&dims, &mut rng);
    let w = dims[3];
    for plane in x.data_mut().chunks_exact_mut(64) {
        for oy in 0..4 {
            for ox in 0..4 {
                let idx = [2 * oy * w + 2 * ox, 2 * oy * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox, (2 * oy + 1) * w + 2 * ox + 1];
                loop {
                    let mut vals: Vec<f64> = idx.iter().map(|&i| plane[i]).collect();
                    vals.sort_by(|a, b| b.total_cmp(a));
                    if vals[0] - vals[1] > 100.0 * EPS {
                        break;
                    }
                    for &i in &idx {
                        plane[i] = rng.symmetric(1.0);
                    }
                }
            }
        }
    }
    let r = random(&[2, 3, 4, 4], &mut rng);
    let (_, indices) = maxpool2x2_forward(&x).expect("forward");
    let gx = maxpool2x2_backward(&r, &indices).expect("backward");
    let nx = numeric(&x, |x| probe(&r, &maxpool2x2_forward(x).unwrap().0));
    max_relative_error(gx.data(), &nx)
}

/// Inputs kept at `|x| > 0.1`, away from the kink.
pub fn check_relu(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let mut x = random(&[3, 17], &mut rng);
    for v in x.data_mut() {
        if v.abs() <= 0.1 {
            *v = if *v < 0.0 { *v - 0.1 } else { *v + 0.1 };
        }
    }
    let r = random(&[3, 17], &mut rng);
    let gx = relu_backward(&x, &r).expect("backward");
    let nx = numeric(&x, |x| probe(&r, &relu_forward(x)));
    max_relative_error(gx.data(), &nx)
}

/// Training-mode dropout with the mask frozen by replaying the same RNG.
pub fn check_dropout(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let x = random(&[4, 16], &mut rng);
    let r = random(&[4, 16], &mut rng);
    let mask_rng = SeededRng::new(seed, Stream::Dropout);
    let mut d = DropoutState::new(0.25).expect("rate");
    d.mode = Mode::Train;
    d.forward(&x, &mut mask_rng.clone());
    let gx = d.backward(&r).expect("backward");
    let nx = numeric(&x, |x| {
        let mut d = DropoutState::new(0.25).unwrap();
        probe(&r, &d.forward(x, &mut mask_rng.clone()))
    });
    max_relative_error(gx.data(), &nx)
}

/// Batch 3, 4 inputs, 2 outputs.
pub fn check_linear(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let x = random(&[3, 4], &mut rng);
    let p = LinearParams::from_parts(random(&[2, 4], &mut rng), random(&[2], &mut rng)).expect("parts");
    let r = random(&[3, 2], &mut rng);
    let mut analytic = p.clone();
    let gx = linear_backward(&x, &mut analytic, &r).expect("backward");
    let nx = numeric(&x, |x| probe(&r, &linear_forward(x, &p).unwrap()));
    let nw = numeric(&p.weights, |w| {
        let q = LinearParams::from_parts(w.clone(), p.bias.clone()).unwrap();
        probe(&r, &linear_forward(&x, &q).unwrap())
    });
    let nb = numeric(&p.bias, |b| {
        let q = LinearParams::from_parts(p.weights.clone(), b.clone()).unwrap();
        probe(&r, &linear_forward(&x, &q).unwrap())
    });
    max_relative_error(gx.data(), &nx)
        .max(max_relative_error(analytic.grad_weights.data(), &nw))
        .max(max_relative_error(analytic.grad_bias.data(), &nb))
}

pub fn check_log_softmax(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let mut x = random(&[3, 10], &mut rng);
    x.scale(3.0);
    let r = random(&[3, 10], &mut rng);
    let y = log_softmax_forward(&x).expect("forward");
    let gx = log_softmax_backward(&y, &r).expect("backward");
    let nx = numeric(&x, |x| probe(&r, &log_softmax_forward(x).unwrap()));
    max_relative_error(gx.data(), &nx)
}

/// NLL composed with log-softmax, differentiated with respect to the logits.
pub fn check_nll(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let mut x = random(&[5, 10], &mut rng);
    x.scale(3.0);
    let targets: Vec<u8> = (0..5).map(|_| rng.below(10) as u8).collect();
    let y = log_softmax_forward(&x).expect("forward");
    let (_, g) = nll_loss(&y, &targets).expect("loss");
    let gx = log_softmax_backward(&y, &g).expect("backward");
    let nx = numeric(&x, |x| nll_loss(&log_softmax_forward(x).unwrap(), &targets).unwrap().0);
    max_relative_error(gx.data(), &nx)
}

/// Whole-network check on the 8x8 toy architecture: NLL loss gradient with
/// respect to every parameter, dropout active with a replayed mask.
pub fn check_toy_network(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, Stream::Test);
    let mut net = Network::with_architecture(Architecture::toy(6), seed).expect("toy");
    // biases away from zero so every block gets a generic gradient
    for t in net.param_pairs_mut() {
        if t.0.shape().rank() == 1 {
            t.0.data_mut().iter_mut().for_each(|b| *b = rng.symmetric(0.5));
        }
    }
    let x = random(&[3, 1, 8, 8], &mut rng);
    let targets: Vec<u8> = (0..3).map(|_| rng.below(10) as u8).collect();
    let mask_rng = SeededRng::new(seed, Stream::Dropout);

    let loss_of = |net: &Network| {
        let (lp, _) = net.forward(&x, Mode::Train, &mut mask_rng.clone()).unwrap();
        nll_loss(&lp, &targets).unwrap().0
    };

    let (lp, cache) = net.forward(&x, Mode::Train, &mut mask_rng.clone()).expect("forward");
    let (_, g) = nll_loss(&lp, &targets).expect("loss");
    let mut analytic = net.clone();
    analytic.backward(&cache, &g).expect("backward");
    let grads: Vec<Tensor> = analytic.grad_tensors().into_iter().cloned().collect();

    let mut worst = 0.0f64;
    for (block, grad) in grads.iter().enumerate() {
        let base = net.param_tensors()[block].clone();
        let num = numeric(&base, |p| {
            let mut probe_net = net.clone();
            *probe_net.param_pairs_mut().swap_remove(block).0 = p.clone();
            loss_of(&probe_net)
        });
        worst = worst.max(max_relative_error(grad.data(), &num));
    }
    worst
}
