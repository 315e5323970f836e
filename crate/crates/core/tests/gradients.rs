//! Finite-difference agreement of every backward pass.

use dprune_core::gradcheck::{
    check_conv2d, check_dropout, check_linear, check_log_softmax, check_maxpool, check_nll,
    check_relu, check_toy_network,
};

const TOL: f64 = 1e-6;

fn over_seeds(name: &str, check: fn(u64) -> f64, tol: f64) {
    for seed in 0..20 {
        let err = check(seed);
        assert!(err <= tol, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn conv2d() {
    over_seeds("conv2d", check_conv2d, TOL);
}

#[test]
fn maxpool() {
    over_seeds("maxpool", check_maxpool, TOL);
}

#[test]
fn relu() {
    over_seeds("relu", check_relu, TOL);
}

#[test]
fn dropout() {
    over_seeds("dropout", check_dropout, TOL);
}

#[test]
fn linear() {
    over_seeds("linear", check_linear, TOL);
}

#[test]
fn log_softmax() {
    over_seeds("log_softmax", check_log_softmax, TOL);
}

#[test]
fn nll() {
    over_seeds("nll", check_nll, TOL);
}

#[test]
fn toy_network() {
    over_seeds("toy network", check_toy_network, 1e-4);
}
