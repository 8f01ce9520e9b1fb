use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbl_core::io::load_csv_dataset;
use sbl_core::sim::{
    run_scenario, run_sweep, verify_error_bound_and_signs, verify_null_retention, write_long_csv, write_metrics_csv,
    DesignKind, Method, MethodSettings, ScenarioConfig, Sigma2Mode, SweepConfig,
};
use sbl_core::{cv_select, em_fit, estimate_rho_hat, select_threshold, Dataset, EmConfig, SblError};
use serde_json::json;

use crate::config::FileConfig;
use crate::format::{exact, opt6, sig6, write_json, write_rows};
use crate::{Common, Failure, Stage};

const NULL_RETENTION_REFERENCE: f64 = 0.6827;

struct Run {
    cfg: FileConfig,
    out: PathBuf,
    seed: u64,
}

/// Merges flags over the config file, sizes the thread pool and creates the
/// output directory.
fn prepare(c: &Common) -> Result<Run, Failure> {
    let mut cfg = match &c.config {
        Some(p) => FileConfig::load(p).stage("config")?,
        None => FileConfig::default(),
    };
    macro_rules! flag {
        ($($f:ident),*) => { $( if c.$f.is_some() { cfg.$f = c.$f.clone(); } )* };
    }
    flag!(x, y, out, seed, threads, fixed_sigma2, c_grid, method);

    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Failure::new(
                "config",
                SblError::InvalidConfig("threads must be positive".into()),
            ));
        }
        // A second build in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sbl-out"));
    std::fs::create_dir_all(&out).stage("output")?;
    let seed = cfg.seed.unwrap_or(0);
    Ok(Run { cfg, out, seed })
}

fn inputs(run: &Run) -> Result<Dataset, Failure> {
    let missing = |what: &str| {
        Failure::new(
            "config",
            SblError::InvalidConfig(format!("--{what} (or \"{what}\" in the config) is required")),
        )
    };
    let x = run.cfg.x.as_ref().ok_or_else(|| missing("x"))?;
    let y = run.cfg.y.as_ref().ok_or_else(|| missing("y"))?;
    load_csv_dataset(x, y).stage("load")
}

fn em_config(run: &Run) -> EmConfig {
    let mut em = run.cfg.em.clone();
    if run.cfg.fixed_sigma2.is_some() {
        em.estimate_sigma2 = false;
    }
    em
}

fn c_grid(run: &Run) -> Vec<f64> {
    run.cfg
        .c_grid
        .clone()
        .unwrap_or_else(|| run.cfg.threshold.c_grid.clone())
}

fn file(run: &Run, name: &str) -> PathBuf {
    run.out.join(name)
}

pub fn fit(c: &Common) -> Result<(), Failure> {
    let run = prepare(c)?;
    let methods = run
        .cfg
        .method
        .clone()
        .unwrap_or_else(|| vec![Method::Sbl, Method::SblThresholded]);
    if methods.contains(&Method::Lasso) {
        return Err(Failure::new(
            "config",
            SblError::InvalidConfig("the lasso is fitted by the `lasso` command".into()),
        ));
    }
    let data = inputs(&run)?;
    let em = em_config(&run);
    let fit = em_fit(&data, &em, run.cfg.fixed_sigma2).stage("fit")?;

    let thresholded = if methods.contains(&Method::SblThresholded) {
        let rho_hat = if data.p() >= 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            estimate_rho_hat(&data, Some(run.cfg.threshold.rho_max_pairs), &mut rng).stage("threshold")?
        } else {
            0.0
        };
        let t = select_threshold(&data, &fit, &c_grid(&run), rho_hat, run.cfg.threshold.bic).stage("threshold")?;
        Some((t, rho_hat))
    } else {
        None
    };

    let mut header = vec!["index", "beta_hat", "gamma_hat"];
    if thresholded.is_some() {
        header.extend(["beta_tilde", "gamma_tilde"]);
    }
    let rows = (0..data.p()).map(|j| {
        let mut row = vec![j.to_string(), exact(fit.beta_hat[j]), exact(fit.hp.gamma[j])];
        if let Some((t, _)) = &thresholded {
            row.extend([exact(t.beta_tilde[j]), exact(t.hp_tilde.gamma[j])]);
        }
        row
    });
    write_rows(&file(&run, "coefficients.csv"), &header, rows).stage("write")?;
    write_rows(
        &file(&run, "ell_trace.csv"),
        &["iteration", "ell"],
        fit.ell_trace
            .iter()
            .enumerate()
            .map(|(i, l)| vec![i.to_string(), exact(*l)]),
    )
    .stage("write")?;

    let support = fit.hp.support();
    let summary = json!({
        "n": data.n(),
        "p": data.p(),
        "sigma2_hat": fit.hp.sigma2,
        "sigma2_fixed": !em.estimate_sigma2,
        "log_likelihood": fit.ell_trace.last(),
        "iterations": fit.iters,
        "converged": fit.converged,
        "monotone": fit.monotone,
        "support": support,
        "thresholded": thresholded.as_ref().map(|(t, rho)| json!({
            "c": t.c,
            "rho_hat": rho,
            "z_star": t.z_star,
            "bic": t.bic,
            "kept": t.kept,
            "sigma2_hat": t.hp_tilde.sigma2,
        })),
    });
    write_json(&file(&run, "fit.json"), &summary).stage("write")?;

    println!(
        "sbl: n = {}, p = {}, sigma2 = {}, log-likelihood = {}, support = {}, iterations = {}{}",
        data.n(),
        data.p(),
        sig6(fit.hp.sigma2),
        opt6(fit.ell_trace.last().copied()),
        support.len(),
        fit.iters,
        if fit.converged { "" } else { " (not converged)" }
    );
    if let Some((t, rho)) = &thresholded {
        println!(
            "sbl-thresholded: c = {}, rho_hat = {}, z* = {}, kept = {}, BIC = {}",
            sig6(t.c),
            sig6(*rho),
            sig6(t.z_star),
            t.kept.len(),
            sig6(t.bic)
        );
    }
    Ok(())
}

pub fn lasso(c: &Common) -> Result<(), Failure> {
    let run = prepare(c)?;
    let data = inputs(&run)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let fit = cv_select(&data, &run.cfg.lasso, &mut rng).stage("lasso")?;
    let path = &fit.path;

    write_rows(
        &file(&run, "lasso_cv.csv"),
        &["lambda", "cv_mean", "cv_se", "support_size", "sweeps"],
        path.lambda_path.iter().enumerate().map(|(i, l)| {
            let k = path.beta_path.column(i).iter().filter(|b| **b != 0.0).count();
            vec![
                exact(*l),
                exact(fit.cv_mean[i]),
                exact(fit.cv_se[i]),
                k.to_string(),
                path.sweeps[i].to_string(),
            ]
        }),
    )
    .stage("write")?;
    let names: Vec<String> = (0..data.p()).map(|j| format!("beta_{j}")).collect();
    let mut header = vec!["lambda"];
    header.extend(names.iter().map(String::as_str));
    write_rows(
        &file(&run, "lasso_path.csv"),
        &header,
        path.lambda_path.iter().enumerate().map(|(i, l)| {
            std::iter::once(exact(*l))
                .chain(path.beta_path.column(i).iter().map(|b| exact(*b)))
                .collect()
        }),
    )
    .stage("write")?;
    write_rows(
        &file(&run, "coefficients.csv"),
        &["index", "beta_hat"],
        fit.beta_hat
            .iter()
            .enumerate()
            .map(|(j, b)| vec![j.to_string(), exact(*b)]),
    )
    .stage("write")?;
    let support: Vec<usize> = (0..data.p()).filter(|&j| fit.beta_hat[j] != 0.0).collect();
    write_json(
        &file(&run, "lasso.json"),
        &json!({
            "n": data.n(),
            "p": data.p(),
            "selected_index": fit.selected_index,
            "selected_lambda": fit.selected_lambda,
            "cv_mean": fit.cv_mean[fit.selected_index],
            "support": support,
            "config": run.cfg.lasso,
            "seed": run.seed,
        }),
    )
    .stage("write")?;
    println!(
        "lasso: lambda = {} (index {} of {}), CV error = {}, support = {}",
        sig6(fit.selected_lambda),
        fit.selected_index,
        path.lambda_path.len(),
        sig6(fit.cv_mean[fit.selected_index]),
        support.len()
    );
    Ok(())
}

fn settings(run: &Run) -> MethodSettings {
    MethodSettings {
        em: run.cfg.em.clone(),
        c_grid: c_grid(run),
        bic: run.cfg.threshold.bic,
        rho_max_pairs: run.cfg.threshold.rho_max_pairs,
        lasso: run.cfg.lasso.clone(),
        record_runtime: false,
    }
}

pub fn simulate(c: &Common) -> Result<(), Failure> {
    let run = prepare(c)?;
    if run.cfg.fixed_sigma2.is_some() {
        return Err(Failure::new(
            "config",
            SblError::InvalidConfig(
                "simulations fix the noise variance through scenario.sigma2_mode = \"known\"".into(),
            ),
        ));
    }
    let mut scenario = run.cfg.scenario.clone();
    if run.cfg.seed.is_some() {
        scenario.seed = run.seed;
    }
    if let Some(x) = &run.cfg.x {
        scenario.design_kind = DesignKind::ExternalCsv;
        scenario.x_path = Some(x.clone());
    }
    let methods = run.cfg.method.clone().unwrap_or_else(|| Method::ALL.to_vec());
    let settings = settings(&run);

    if let Some(sweep) = &run.cfg.sweep {
        let cfg = SweepConfig {
            base: scenario,
            rho: sweep.rho.clone(),
            s: sweep.s.clone(),
            a: sweep.a.clone(),
        };
        let res = run_sweep(&cfg, &methods, &settings).stage("simulate")?;
        let w = BufWriter::new(File::create(file(&run, "sweep_long.csv")).stage("write")?);
        write_long_csv(w, &res).stage("write")?;
        let cells: Vec<_> = res
            .cells
            .iter()
            .map(|c| json!({ "rho": c.rho, "s": c.s, "a": c.a, "summary": c.result.summary }))
            .collect();
        write_json(
            &file(&run, "sweep_summary.json"),
            &json!({ "sweep": cfg, "cells": cells }),
        )
        .stage("write")?;
        println!("simulate: {} cells written to {}", res.cells.len(), run.out.display());
        return Ok(());
    }

    let res = run_scenario(&scenario, &methods, &settings).stage("simulate")?;
    let w = BufWriter::new(File::create(file(&run, "metrics.csv")).stage("write")?);
    write_metrics_csv(w, &res.records).stage("write")?;
    let failures: Vec<_> = res
        .records
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| json!({ "method": r.method, "rep": r.rep, "error": e }))
        })
        .collect();
    write_json(
        &file(&run, "summary.json"),
        &json!({ "scenario": res.config, "summary": res.summary, "failures": failures }),
    )
    .stage("write")?;
    println!("method,sen,spe,rel_error,support_size,failed");
    for m in &res.summary {
        println!(
            "{},{},{},{},{},{}",
            m.method,
            opt6(m.mean_sen),
            opt6(m.mean_spe),
            opt6(m.mean_rel_error),
            opt6(m.mean_support_size),
            m.n_failed
        );
    }
    Ok(())
}

fn orthogonal_known(n: usize, p: usize, s: usize, a: f64, n_reps: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n,
        p,
        s,
        a,
        n_reps,
        seed,
        design_kind: DesignKind::ExactOrthogonal,
        sigma2_mode: Sigma2Mode::Known,
        ..ScenarioConfig::default()
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn verify(c: &Common, null_retention: bool, error_bound: bool, reps: Option<usize>) -> Result<(), Failure> {
    let run = prepare(c)?;
    let v = &run.cfg.verify;
    let em = em_config(&run);
    let mut report = serde_json::Map::new();

    if null_retention {
        let cfg = orthogonal_known(64, 64, 4, 1.0, reps.unwrap_or(v.null_retention_reps), run.seed);
        let r = verify_null_retention(&cfg, &em).stage("verify")?;
        let pass = r
            .frequency
            .is_some_and(|f| (f - NULL_RETENTION_REFERENCE).abs() <= 0.01);
        println!(
            "null-retention: {} frequency {} over {} null coordinates (reference {}, closed form agrees on all but {})",
            verdict(pass),
            opt6(r.frequency),
            r.null_trials,
            sig6(r.reference),
            r.disagreements
        );
        report.insert("null_retention".into(), json!({ "pass": pass, "report": r }));
    }
    if error_bound {
        let cfg = orthogonal_known(256, 128, 8, 3.0, reps.unwrap_or(v.bound_reps), run.seed);
        let r = verify_error_bound_and_signs(&cfg, v.c0, &em).stage("verify")?;
        let bound_pass = r.bound_pass_rate >= 0.99;
        let floor_pass = r.bound_pass_rate >= r.probability_floor - 3.0 * r.floor_se;
        let sign_pass = r.sign_pass_rate.is_some_and(|s| s >= 0.95);
        println!(
            "error-bound: {} {} of {} reps within {} (probability floor {})",
            verdict(bound_pass && floor_pass),
            r.bound_passes,
            r.reps,
            sig6(r.bound),
            sig6(r.probability_floor)
        );
        println!(
            "sign-recovery: {} {} of {} eligible reps (signal floor {})",
            verdict(sign_pass),
            r.sign_passes,
            r.sign_eligible,
            sig6(r.signal_floor)
        );
        report.insert(
            "error_bound".into(),
            json!({ "pass": bound_pass && floor_pass, "sign_pass": sign_pass, "report": r }),
        );
    }
    write_json(&file(&run, "verify.json"), &report).stage("write")
}
