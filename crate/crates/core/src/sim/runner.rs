use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{generate_truth_and_response, DesignSource};
use super::metrics::{compute_metrics, summarize, MethodSummary, MetricsRecord};
use super::rng::{stream_rng, Stream};
use super::{Method, ScenarioConfig, Sigma2Mode};
use crate::em::{em_fit, EmConfig};
use crate::error::Result;
use crate::lasso::{cv_select, LassoConfig};
use crate::model::Dataset;
use crate::threshold::{default_c_grid, estimate_rho_hat, select_threshold, BicResidual, DEFAULT_MAX_PAIRS};

/// Estimator settings shared by every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSettings {
    pub em: EmConfig,
    pub c_grid: Vec<f64>,
    pub bic: BicResidual,
    pub rho_max_pairs: usize,
    pub lasso: LassoConfig,
    /// Wall-clock timing per fit. Off by default so tables are reproducible
    /// byte for byte; `runtime_ms` is then 0.
    pub record_runtime: bool,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            c_grid: default_c_grid(),
            bic: BicResidual::Squared,
            rho_max_pairs: DEFAULT_MAX_PAIRS,
            lasso: LassoConfig::default(),
            record_runtime: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<MethodSummary>,
}

struct Timer(Option<Instant>);

impl Timer {
    fn start(on: bool) -> Self {
        Timer(on.then(Instant::now))
    }
    fn ms(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3)
    }
}

fn run_rep(
    cfg: &ScenarioConfig,
    source: &DesignSource,
    methods: &[Method],
    settings: &MethodSettings,
    rep: usize,
) -> Vec<MetricsRecord> {
    let key = rep as u64;
    let fail_all = |msg: String| {
        methods
            .iter()
            .map(|&m| MetricsRecord::failed(m, rep, msg.clone(), 0.0))
            .collect()
    };
    let data = source
        .draw(cfg, key)
        .and_then(|x| generate_truth_and_response(cfg, &x, key).map(|ty| (x, ty)))
        .and_then(|(x, (truth, y))| Dataset::new(x, y).map(|d| (d, truth)));
    let (data, truth) = match data {
        Ok(v) => v,
        Err(e) => return fail_all(format!("data generation: {e}")),
    };

    let wants_sbl = methods
        .iter()
        .any(|m| matches!(m, Method::Sbl | Method::SblThresholded));
    let t = Timer::start(settings.record_runtime);
    let sbl = wants_sbl.then(|| match cfg.sigma2_mode {
        Sigma2Mode::Estimated => em_fit(&data, &settings.em, None),
        Sigma2Mode::Known => {
            let em = EmConfig {
                estimate_sigma2: false,
                ..settings.em.clone()
            };
            em_fit(&data, &em, Some(cfg.sigma_star2()))
        }
    });
    let sbl_ms = t.ms();

    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let rec = match method {
            Method::Sbl => match sbl.as_ref().expect("fitted") {
                Ok(fit) => MetricsRecord::ok(method, rep, compute_metrics(fit.beta_hat.view(), &truth), sbl_ms),
                Err(e) => MetricsRecord::failed(method, rep, e.to_string(), sbl_ms),
            },
            Method::SblThresholded => {
                let t = Timer::start(settings.record_runtime);
                let res = sbl
                    .as_ref()
                    .expect("fitted")
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|fit| {
                        let mut rng = stream_rng(cfg.seed, key, Stream::RhoPairs);
                        let rho = if data.p() < 2 {
                            0.0
                        } else {
                            estimate_rho_hat(&data, Some(settings.rho_max_pairs), &mut rng)
                                .map_err(|e| e.to_string())?
                        };
                        select_threshold(&data, fit, &settings.c_grid, rho, settings.bic).map_err(|e| e.to_string())
                    });
                let ms = sbl_ms + t.ms();
                match res {
                    Ok(tf) => MetricsRecord::ok(method, rep, compute_metrics(tf.beta_tilde.view(), &truth), ms),
                    Err(e) => MetricsRecord::failed(method, rep, e, ms),
                }
            }
            Method::Lasso => {
                let t = Timer::start(settings.record_runtime);
                let mut rng = stream_rng(cfg.seed, key, Stream::Folds);
                let res = cv_select(&data, &settings.lasso, &mut rng);
                let ms = t.ms();
                match res {
                    Ok(fit) => MetricsRecord::ok(method, rep, compute_metrics(fit.beta_hat.view(), &truth), ms),
                    Err(e) => MetricsRecord::failed(method, rep, e.to_string(), ms),
                }
            }
        };
        out.push(rec);
    }
    out
}

/// Runs every replication (in parallel) and returns per-rep rows in
/// `(rep, method)` order plus per-method means. Method failures are recorded
/// in their rows; only configuration problems are fatal.
pub fn run_scenario(cfg: &ScenarioConfig, methods: &[Method], settings: &MethodSettings) -> Result<ScenarioResult> {
    cfg.validate()?;
    settings.em.validate()?;
    settings.lasso.validate()?;
    let source = DesignSource::resolve(cfg)?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let records: Vec<MetricsRecord> = (1..=cfg.n_reps)
        .into_par_iter()
        .map(|rep| run_rep(cfg, &source, &methods, settings, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(&records);
    Ok(ScenarioResult {
        config: cfg.clone(),
        records,
        summary,
    })
}

/// Grid of scenarios sharing everything but `(rho, s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub rho: Vec<f64>,
    pub s: Vec<usize>,
    pub a: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            rho: vec![0.0, 0.9],
            s: vec![3, 15, 25, 50],
            a: (0..10).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub rho: f64,
    pub s: usize,
    pub a: f64,
    pub result: ScenarioResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, rho: f64, s: usize, a: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.rho == rho && c.s == s && c.a == a)
    }
}

/// Every cell reuses the base seed, so cells differing only in `a` share
/// designs, supports and noise.
pub fn run_sweep(sweep: &SweepConfig, methods: &[Method], settings: &MethodSettings) -> Result<SweepResult> {
    let mut cells = Vec::new();
    for &rho in &sweep.rho {
        for &s in &sweep.s {
            for &a in &sweep.a {
                let cfg = ScenarioConfig {
                    rho,
                    s,
                    a,
                    ..sweep.base.clone()
                };
                let result = run_scenario(&cfg, methods, settings)?;
                cells.push(SweepCell { rho, s, a, result });
            }
        }
    }
    Ok(SweepResult { cells })
}
