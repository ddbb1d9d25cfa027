#![allow(dead_code)]

use boxcox_core::model::{dichotomize, CompositeDesign};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// The fixed instance of `tests/oracles/smooth_optimum.py`.
pub fn oracle_instance() -> (DMatrix<f64>, Vec<f64>, CompositeDesign) {
    let (n, p) = (50, 3);
    let x = DMatrix::from_fn(n, p, |i, j| {
        let (i, j) = ((i + 1) as f64, (j + 1) as f64);
        1.5 * ((0.7 + 0.45 * j) * i + 0.3 * j).sin()
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i + 1) as f64;
            x[(i, 0)] - 0.5 * x[(i, 1)] + 0.3 * x[(i, 2)] + 1.2 * (2.1 * t).cos() + 0.9 * (0.37 * t * t).sin()
        })
        .collect();
    let design = dichotomize(&y, &[-0.4, 0.5], &[0.5, 0.5]).unwrap();
    (x, y, design)
}

/// Gaussian design and a noisy linear latent response, cut at `k`
/// percentile thresholds.
pub fn random_instance(seed: u64, n: usize, p: usize, k: usize) -> (DMatrix<f64>, Vec<f64>, CompositeDesign) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta: Vec<f64> = (0..p).map(|j| if j < 2 { 1.0 - 2.0 * j as f64 } else { 0.0 }).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            eta + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let (design, _) = CompositeDesign::from_response(&y, k).unwrap();
    (x, y, design)
}

/// `L′(0) = −φ(0)/Φ(0) = −√(2/π)`.
pub fn l_prime_zero() -> f64 {
    -(2.0 / std::f64::consts::PI).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
