//! Weight initialization: Xavier-uniform for projections, N(0, 0.02) for
//! CLS/prompt tokens, zeros for biases, ones for layer-norm scales.

use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub fn xavier_uniform<S: Scalar>(rng: &mut SplitMix64, rows: usize, cols: usize) -> Vec<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols)
        .map(|_| S::from_f64_c((rng.next_f64() * 2.0 - 1.0) * limit))
        .collect()
}

pub fn gaussian<S: Scalar>(rng: &mut SplitMix64, n: usize, std: f64) -> Vec<S> {
    (0..n).map(|_| S::from_f64_c(rng.next_gaussian() * std)).collect()
}

pub fn zeros<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::zero(); n]
}

pub fn ones<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::one(); n]
}
