use proptest::prelude::*;
use sbl_core::sim::{
    compute_metrics, generate_design, generate_truth_and_response, run_scenario, write_metrics_csv, DesignKind, Method,
    MethodSettings, ScenarioConfig, Sigma2Mode,
};
use sbl_core::{orthogonal_closed_form, Dataset, GroundTruth};

fn scenario(n: usize, p: usize, rho: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n,
        p,
        rho,
        s: 3,
        n_reps: 2,
        seed,
        ..ScenarioConfig::default()
    }
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (a.dot(&a) * b.dot(&b)).sqrt()
}

#[test]
fn uncorrelated_design_has_small_cosines() {
    let x = generate_design(&scenario(200, 50, 0.0, 1), 1).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..50 {
        for k in j + 1..50 {
            worst = worst.max(cosine(x.column(j), x.column(k)).abs());
        }
    }
    assert!(worst <= 0.5, "{worst}");
}

#[test]
fn equicorrelated_design_has_target_correlation() {
    let x = generate_design(&scenario(400, 40, 0.9, 2), 1).unwrap();
    let mut sum = 0.0;
    let mut count = 0.0;
    for j in 0..40 {
        for k in j + 1..40 {
            sum += cosine(x.column(j), x.column(k));
            count += 1.0;
        }
    }
    let mean = sum / count;
    assert!((mean - 0.9).abs() <= 0.05, "{mean}");
}

#[test]
fn truth_follows_the_magnitude_rule() {
    let cfg = ScenarioConfig {
        a: 4.0,
        s: 5,
        ..scenario(30, 20, 0.0, 3)
    };
    let x = generate_design(&cfg, 1).unwrap();
    let (truth, y) = generate_truth_and_response(&cfg, &x, 1).unwrap();
    assert_eq!(truth.s, 5);
    assert_eq!(y.len(), 30);
    for &j in &truth.support {
        assert!((4.0..5.0).contains(&truth.beta_star[j]));
    }
    let signed = ScenarioConfig {
        random_signs: true,
        s: 20,
        ..cfg
    };
    let (t2, _) = generate_truth_and_response(&signed, &x, 1).unwrap();
    assert!(t2.beta_star.iter().any(|b| *b < 0.0));
    assert!(t2.beta_star.iter().all(|b| (4.0..5.0).contains(&b.abs())));
}

#[test]
fn metric_examples() {
    let truth = GroundTruth::new(ndarray::array![1.0, 0.0, 2.0, 0.0], 1.0);
    let m = compute_metrics(ndarray::array![0.5, 0.3, 0.0, 0.0].view(), &truth);
    assert_eq!(m.sen, Some(0.5));
    assert_eq!(m.spe, Some(0.5));
    assert_eq!(m.support_size, 2);
    let none = compute_metrics(ndarray::array![0.0, 0.0, 0.0, 0.0].view(), &truth);
    assert_eq!(none.spe, None);
}

#[test]
fn scenario_output_is_reproducible() {
    let cfg = ScenarioConfig {
        a: 2.0,
        ..scenario(40, 60, 0.5, 4)
    };
    let a = run_scenario(&cfg, &Method::ALL, &MethodSettings::default()).unwrap();
    let b = run_scenario(&cfg, &Method::ALL, &MethodSettings::default()).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_metrics_csv(&mut ca, &a.records).unwrap();
    write_metrics_csv(&mut cb, &b.records).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.records.len(), 2 * 3);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let c = pool.install(|| run_scenario(&cfg, &Method::ALL, &MethodSettings::default()).unwrap());
    let mut cc = Vec::new();
    write_metrics_csv(&mut cc, &c.records).unwrap();
    assert_eq!(ca, cc);
}

#[test]
fn single_rep_orthogonal_fit_matches_closed_form() {
    let cfg = ScenarioConfig {
        n: 32,
        p: 16,
        s: 3,
        a: 1.0,
        n_reps: 1,
        seed: 8,
        design_kind: DesignKind::ExactOrthogonal,
        sigma2_mode: Sigma2Mode::Known,
        ..ScenarioConfig::default()
    };
    let res = run_scenario(&cfg, &[Method::Sbl], &MethodSettings::default()).unwrap();
    let x = generate_design(&cfg, 1).unwrap();
    let (truth, y) = generate_truth_and_response(&cfg, &x, 1).unwrap();
    let data = Dataset::new(x, y).unwrap();
    let closed = orthogonal_closed_form(&data, 1.0).unwrap();
    let beta = sbl_core::beta_from_gamma(&data, &closed).unwrap();
    let want = compute_metrics(beta.view(), &truth);
    let got = res.records[0].values.unwrap();
    assert_eq!(got.sen, want.sen);
    assert_eq!(got.spe, want.spe);
    assert!((got.rel_error.unwrap() - want.rel_error.unwrap()).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_bounded(seed in any::<u64>(), s in 0usize..6) {
        let cfg = ScenarioConfig { s, ..scenario(10, 8, 0.0, seed) };
        let x = generate_design(&cfg, 1).unwrap();
        let (truth, y) = generate_truth_and_response(&cfg, &x, 1).unwrap();
        let guess = y.iter().take(8).map(|v| if *v > 0.0 { *v } else { 0.0 }).collect::<ndarray::Array1<f64>>();
        let m = compute_metrics(guess.view(), &truth);
        if let Some(v) = m.sen { prop_assert!((0.0..=1.0).contains(&v)); }
        if let Some(v) = m.spe { prop_assert!((0.0..=1.0).contains(&v)); }
        prop_assert_eq!(m.rel_error.is_none(), s == 0);
    }
}
