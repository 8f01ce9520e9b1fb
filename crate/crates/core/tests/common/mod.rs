#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbl_core::{Dataset, HyperParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

pub fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

/// Gaussian design, sparse signal plus unit noise.
pub fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = gaussian_matrix(n, p, &mut r);
    let mut beta = Array1::zeros(p);
    for j in 0..p.min(3) {
        beta[j] = 2.0 - j as f64;
    }
    let y = x.dot(&beta) + gaussian_vector(n, &mut r);
    Dataset::new(x, y).unwrap()
}

/// Positive variances with roughly a third of the entries zero.
pub fn random_hyper(p: usize, seed: u64) -> HyperParams {
    let mut r = rng(seed ^ 0x5eed);
    let gamma = Array1::from_shape_fn(p, |_| {
        if r.random::<f64>() < 0.33 {
            0.0
        } else {
            10f64.powf(r.random_range(-2.0..1.0))
        }
    });
    HyperParams::new(gamma, r.random_range(0.1..3.0)).unwrap()
}

pub fn max_abs(a: &Array1<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
