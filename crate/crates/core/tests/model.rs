mod common;

use approx::assert_relative_eq;
use common::{random_dataset, random_hyper};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use sbl_core::model::{log_marginal_likelihood_dense, log_marginal_likelihood_woodbury};
use sbl_core::{likelihood_gradient_coordinate, log_marginal_likelihood, posterior_moments, Dataset, HyperParams};

fn central_difference(data: &Dataset, hp: &HyperParams, j: usize) -> f64 {
    let h = 1e-5 * (1.0 + hp.gamma[j]);
    let at = |d: f64| {
        let mut q = hp.clone();
        q.gamma[j] += d;
        log_marginal_likelihood(data, &q).unwrap()
    };
    (at(h) - at(-h)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn woodbury_and_dense_routes_agree(n in 2usize..40, p in 1usize..40, seed in any::<u64>()) {
        let data = random_dataset(n, p, seed);
        let hp = random_hyper(p, seed);
        let w = log_marginal_likelihood_woodbury(&data, &hp).unwrap();
        let d = log_marginal_likelihood_dense(&data, &hp).unwrap();
        prop_assert!((w - d).abs() <= 1e-10 * w.abs().max(1.0), "{w} vs {d}");
    }

    #[test]
    fn gradient_matches_finite_differences(n in 3usize..30, p in 1usize..30, seed in any::<u64>()) {
        let data = random_dataset(n, p, seed);
        let mut hp = random_hyper(p, seed);
        // keep the probed coordinate strictly inside the domain
        let j = (seed % p as u64) as usize;
        hp.gamma[j] = hp.gamma[j].max(0.05);
        let a = likelihood_gradient_coordinate(&data, &hp, j).unwrap();
        let fd = central_difference(&data, &hp, j);
        prop_assert!((a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()).max(1e-3), "{a} vs {fd}");
    }

    #[test]
    fn likelihood_is_permutation_invariant(n in 2usize..25, p in 2usize..25, seed in any::<u64>()) {
        let data = random_dataset(n, p, seed);
        let hp = random_hyper(p, seed);
        let perm: Vec<usize> = (0..p).rev().collect();
        let permuted = Dataset::new(data.x().select(Axis(1), &perm), data.y().to_owned()).unwrap();
        let hp_p = HyperParams::new(hp.gamma.select(Axis(0), &perm), hp.sigma2).unwrap();
        let a = log_marginal_likelihood(&data, &hp).unwrap();
        let b = log_marginal_likelihood(&permuted, &hp_p).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn posterior_covariance_inverts_regularized_gram(n in 2usize..30, p in 1usize..20, seed in any::<u64>()) {
        let data = random_dataset(n, p, seed);
        let hp = random_hyper(p, seed);
        let pm = posterior_moments(&data, &hp).unwrap();
        let k = pm.support.len();
        let xa = data.x().select(Axis(1), &pm.support);
        let mut a = xa.t().dot(&xa);
        for (i, &j) in pm.support.iter().enumerate() {
            a[[i, i]] += hp.sigma2 / hp.gamma[j];
        }
        let prod = a.dot(&pm.v);
        let err = (&prod - &Array2::<f64>::eye(k)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err <= 1e-10, "max |AV - I| = {err}");
    }
}

#[test]
fn hand_evaluated_two_by_two_case() {
    let x = Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap();
    let data = Dataset::new(x, ndarray::array![3.0, 0.5]).unwrap();
    let hp = HyperParams::new(ndarray::array![8.0], 1.0).unwrap();
    let want = -0.5 * 9f64.ln() - 0.5 * (1.0 + 0.25);
    assert_relative_eq!(log_marginal_likelihood(&data, &hp).unwrap(), want, max_relative = 1e-12);
    assert_relative_eq!(
        log_marginal_likelihood_dense(&data, &hp).unwrap(),
        want,
        max_relative = 1e-12
    );
}

#[test]
fn gradient_at_zero_matches_closed_form() {
    // C_j = I: ½(Q² − S) with S = 1, Q = 3
    let data = Dataset::new(Array2::eye(2), ndarray::array![3.0, 0.0]).unwrap();
    let hp = HyperParams::new(Array1::zeros(2), 1.0).unwrap();
    assert_relative_eq!(
        likelihood_gradient_coordinate(&data, &hp, 0).unwrap(),
        4.0,
        max_relative = 1e-12
    );
}
