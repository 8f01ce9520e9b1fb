mod common;

use common::{random_dataset, rng};
use ndarray::Array1;
use proptest::prelude::*;
use sbl_core::sim::orthogonal;
use sbl_core::threshold::{bic_score, default_c_grid};
use sbl_core::{
    em_fit, estimate_rho_hat, hard_threshold, select_threshold, BicResidual, Dataset, EmConfig, SblFit, ThresholdConfig,
};

fn fitted(n: usize, p: usize, seed: u64) -> (Dataset, SblFit) {
    let data = random_dataset(n, p, seed);
    let fit = em_fit(&data, &EmConfig::fixed_sigma2(), Some(1.0)).unwrap();
    (data, fit)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kept_set_shrinks_as_c_grows(seed in any::<u64>(), rho in 0.0f64..=1.0) {
        let (data, fit) = fitted(30, 20, seed);
        let mut prev: Option<Vec<usize>> = None;
        for c in [0.1, 0.25, 0.5, 1.0, 2.0, 4.0] {
            let t = hard_threshold(&data, &fit, &ThresholdConfig::new(c, rho, 20).unwrap()).unwrap();
            if let Some(p) = &prev {
                prop_assert!(t.kept.iter().all(|j| p.contains(j)));
            }
            prev = Some(t.kept);
        }
    }

    #[test]
    fn thresholding_is_idempotent_and_zeros_match(seed in any::<u64>(), c in 0.1f64..3.0) {
        let (data, fit) = fitted(30, 20, seed);
        let tc = ThresholdConfig::new(c, 0.3, 20).unwrap();
        let once = hard_threshold(&data, &fit, &tc).unwrap();
        let refit = SblFit { hp: once.hp_tilde.clone(), beta_hat: once.beta_tilde.clone(), ..fit.clone() };
        let twice = hard_threshold(&data, &refit, &tc).unwrap();
        prop_assert_eq!(&once.kept, &twice.kept);
        prop_assert_eq!(&once.beta_tilde, &twice.beta_tilde);
        for j in 0..20 {
            prop_assert_eq!(once.beta_tilde[j] != 0.0, once.kept.contains(&j));
        }
    }

    #[test]
    fn orthogonal_kept_means_are_unchanged(seed in any::<u64>(), c in 0.1f64..2.0) {
        let mut r = rng(seed);
        let x = orthogonal(40, 12, &mut r).unwrap();
        let beta = Array1::from_shape_fn(12, |j| if j < 4 { 0.5 } else { 0.0 });
        let y = x.dot(&beta) + common::gaussian_vector(40, &mut r);
        let data = Dataset::new(x, y).unwrap();
        let fit = em_fit(&data, &EmConfig::fixed_sigma2(), Some(1.0)).unwrap();
        let t = hard_threshold(&data, &fit, &ThresholdConfig::new(c, 0.0, 12).unwrap()).unwrap();
        for &j in &t.kept {
            prop_assert!((t.beta_tilde[j] - fit.beta_hat[j]).abs() <= 1e-10 * (1.0 + fit.beta_hat[j].abs()));
        }
    }

    #[test]
    fn selection_matches_brute_force(seed in any::<u64>()) {
        let (data, fit) = fitted(40, 30, seed);
        let rho = estimate_rho_hat(&data, None, &mut rng(0)).unwrap();
        let grid = default_c_grid();
        let chosen = select_threshold(&data, &fit, &grid, rho, BicResidual::Squared).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for &c in &grid {
            let t = hard_threshold(&data, &fit, &ThresholdConfig::new(c, rho, 30).unwrap()).unwrap();
            let b = bic_score(&data, &t);
            if b <= best.0 {
                best = (b, c);
            }
        }
        prop_assert_eq!(chosen.c, best.1);
        prop_assert_eq!(chosen.bic, best.0);
    }
}

#[test]
fn rho_hat_is_a_cosine() {
    let data = random_dataset(20, 15, 3);
    let exact = estimate_rho_hat(&data, None, &mut rng(1)).unwrap();
    let sampled = estimate_rho_hat(&data, Some(10), &mut rng(1)).unwrap();
    assert!((0.0..=1.0).contains(&exact));
    assert!(sampled <= exact + 1e-15);
}
