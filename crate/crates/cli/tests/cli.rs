use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbl"))
        .args(args)
        .env_remove("SBL_THREADS")
        .output()
        .expect("binary runs")
}

fn toy(dir: &Path) -> (String, String) {
    let x = dir.join("x.csv");
    let y = dir.join("y.csv");
    fs::write(&x, "a,b\n1,0\n0,1\n").unwrap();
    fs::write(&y, "3\n0.5\n").unwrap();
    (x.display().to_string(), y.display().to_string())
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn fit_on_toy_data_gives_closed_form() {
    let dir = TempDir::new().unwrap();
    let (x, y) = toy(dir.path());
    let out = dir.path().join("out");
    let o = sbl(&[
        "fit",
        "--x",
        &x,
        "--y",
        &y,
        "--fixed-sigma2",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let coef = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let gamma = column(&coef, "gamma_hat");
    assert!((gamma[0] - 8.0).abs() < 1e-6 && gamma[1] == 0.0, "{gamma:?}");
    // 17 significant digits
    assert!(coef.lines().nth(1).unwrap().contains("e0"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(summary["sigma2_fixed"], true);
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = TempDir::new().unwrap();
    let (x, y) = toy(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = sbl(&[
            "fit",
            "--x",
            &x,
            "--y",
            &y,
            "--fixed-sigma2",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for f in ["coefficients.csv", "ell_trace.csv", "fit.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn mismatched_inputs_report_stage_and_fail() {
    let dir = TempDir::new().unwrap();
    let (x, _) = toy(dir.path());
    let y = dir.path().join("y3.csv");
    fs::write(&y, "1\n2\n3\n").unwrap();
    let o = sbl(&[
        "fit",
        "--x",
        &x,
        "--y",
        y.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let report: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(report["stage"], "load");
    assert_eq!(report["kind"], "dimension-mismatch");
    let msg = report["message"].as_str().unwrap();
    assert!(msg.contains('2') && msg.contains('3'));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let (x, y) = toy(dir.path());
    let cfg = dir.path().join("cfg.json");
    let out_cfg = dir.path().join("from-config");
    fs::write(
        &cfg,
        serde_json::json!({ "x": x, "y": y, "out": out_cfg, "fixed_sigma2": 4.0, "method": ["sbl"] }).to_string(),
    )
    .unwrap();
    let o = sbl(&["fit", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = column(
        &fs::read_to_string(out_cfg.join("coefficients.csv")).unwrap(),
        "gamma_hat",
    );
    assert!((g[0] - 5.0).abs() < 1e-6, "{g:?}");

    let out_flag = dir.path().join("from-flag");
    let o = sbl(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--fixed-sigma2",
        "1",
        "--out",
        out_flag.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let g = column(
        &fs::read_to_string(out_flag.join("coefficients.csv")).unwrap(),
        "gamma_hat",
    );
    assert!((g[0] - 8.0).abs() < 1e-6, "{g:?}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "em": { "max_iter": 5 } }"#).unwrap();
    let o = sbl(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let report: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(report["stage"], "config");
}

#[test]
fn simulate_writes_one_row_per_rep_and_method() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        serde_json::json!({ "scenario": { "n": 40, "p": 60, "s": 3, "a": 2.0, "n_reps": 3 } }).to_string(),
    )
    .unwrap();
    let out = dir.path().join("sim");
    let o = sbl(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--threads",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(csv.starts_with("method,rep,sen,spe,rel_error,support_size,runtime_ms"));
}

#[test]
fn lasso_command_writes_path_and_cv_curve() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    let mut xs = String::new();
    let mut ys = String::new();
    for i in 0..30 {
        let a = (i as f64 * 0.7).sin();
        let b = (i as f64 * 1.3).cos();
        let c = ((i * i) as f64 * 0.1).sin();
        xs.push_str(&format!("{a},{b},{c}\n"));
        ys.push_str(&format!("{}\n", 2.0 * a - b + 0.1 * c));
    }
    fs::write(&x, xs).unwrap();
    fs::write(&y, ys).unwrap();
    let out = dir.path().join("l");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "lasso": { "n_lambda": 20, "k_folds": 5 } }"#).unwrap();
    let o = sbl(&[
        "lasso",
        "--x",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(out.join("lasso_cv.csv")).unwrap().lines().count(),
        21
    );
    let beta = column(&fs::read_to_string(out.join("coefficients.csv")).unwrap(), "beta_hat");
    assert!(beta[0] > 1.0 && beta[1] < -0.5);
}

#[test]
fn verify_null_retention_reports_reference() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v");
    let o = sbl(&[
        "verify",
        "--null-retention",
        "--reps",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("null-retention"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    let r = &v["null_retention"]["report"];
    assert!((r["reference"].as_f64().unwrap() - 0.6827).abs() < 1e-4);
    assert_eq!(r["null_trials"], 40 * 60);
    assert!(v.get("error_bound").is_none());
}
