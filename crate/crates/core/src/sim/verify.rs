//! Monte-Carlo checks of the orthogonal-design results: the probability that
//! a null coordinate is fitted exactly at zero, the thresholded estimator's
//! error bound and its sign recovery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use super::design::{generate_truth_and_response, DesignSource};
use super::{DesignKind, ScenarioConfig};
use crate::em::{em_fit, orthogonal_closed_form, EmConfig};
use crate::error::{Result, SblError};
use crate::model::Dataset;
use crate::threshold::{hard_threshold, ThresholdConfig};

/// `P(Z² ≤ 1)` for standard normal `Z`, about 0.6827.
pub fn chi2_one_mass_below_one() -> f64 {
    erf(std::f64::consts::FRAC_1_SQRT_2)
}

/// Probability floor `1 − p^{−c₀ s / 8} − e^{−s}` of the error bound.
pub fn bound_probability_floor(p: usize, s: usize, c0: f64) -> f64 {
    1.0 - (p as f64).powf(-c0 * s as f64 / 8.0) - (-(s as f64)).exp()
}

fn wilson(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0);
    let n = trials as f64;
    let ph = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (ph + z * z / (2.0 * n)) / denom;
    let half = z * (ph * (1.0 - ph) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

fn check_orthogonal_known(cfg: &ScenarioConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.design_kind != DesignKind::ExactOrthogonal {
        return Err(SblError::InvalidConfig(
            "this verification needs an exact-orthogonal design".into(),
        ));
    }
    Ok(())
}

fn fixed_sigma_cfg(em: &EmConfig) -> EmConfig {
    EmConfig {
        estimate_sigma2: false,
        ..em.clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullRetentionReport {
    pub reps: usize,
    pub null_trials: usize,
    /// Null coordinates with `γ̂_j = 0` after EM.
    pub retained: usize,
    /// Null coordinates at zero in the closed-form maximizer.
    pub retained_closed_form: usize,
    /// Null coordinates where EM and the closed form disagree on zero.
    pub disagreements: usize,
    /// `None` when there are no null coordinates (`s = p`).
    pub frequency: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub reference: f64,
    pub non_converged_reps: usize,
}

/// Fits SBL at the true noise variance on each replication and counts null
/// coordinates fitted exactly at zero.
pub fn verify_null_retention(cfg: &ScenarioConfig, em: &EmConfig) -> Result<NullRetentionReport> {
    check_orthogonal_known(cfg)?;
    let em = fixed_sigma_cfg(em);
    let source = DesignSource::resolve(cfg)?;
    let sigma2 = cfg.sigma_star2();
    let per_rep: Vec<(usize, usize, usize, usize, bool)> = (1..=cfg.n_reps)
        .into_par_iter()
        .map(|rep| -> Result<_> {
            let key = rep as u64;
            let x = source.draw(cfg, key)?;
            let (truth, y) = generate_truth_and_response(cfg, &x, key)?;
            let data = Dataset::new(x, y)?;
            let fit = em_fit(&data, &em, Some(sigma2))?;
            let closed = orthogonal_closed_form(&data, sigma2)?;
            let (mut trials, mut zero, mut zero_cf, mut disagree) = (0, 0, 0, 0);
            for j in 0..cfg.p {
                if truth.beta_star[j] != 0.0 {
                    continue;
                }
                trials += 1;
                let a = fit.hp.gamma[j] == 0.0;
                let b = closed.gamma[j] == 0.0;
                zero += a as usize;
                zero_cf += b as usize;
                disagree += (a != b) as usize;
            }
            Ok((trials, zero, zero_cf, disagree, fit.converged))
        })
        .collect::<Result<_>>()?;
    let mut r = NullRetentionReport {
        reps: cfg.n_reps,
        null_trials: 0,
        retained: 0,
        retained_closed_form: 0,
        disagreements: 0,
        frequency: None,
        ci95: None,
        reference: chi2_one_mass_below_one(),
        non_converged_reps: 0,
    };
    for (t, z, zc, d, conv) in per_rep {
        r.null_trials += t;
        r.retained += z;
        r.retained_closed_form += zc;
        r.disagreements += d;
        r.non_converged_reps += (!conv) as usize;
    }
    if r.null_trials > 0 {
        r.frequency = Some(r.retained as f64 / r.null_trials as f64);
        r.ci95 = Some(wilson(r.retained, r.null_trials, 0.95));
    }
    Ok(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub reps: usize,
    pub c0: f64,
    /// Smallest `‖x_j‖² / n` over all replications.
    pub c: f64,
    /// `M = 4 (2 + c₀) / c`.
    pub m: f64,
    /// `M σ² s log p / n`.
    pub bound: f64,
    /// `√bound`; sign recovery is only claimed above this magnitude.
    pub signal_floor: f64,
    pub bound_passes: usize,
    pub bound_pass_rate: f64,
    /// Replications where every nonzero exceeds the signal floor.
    pub sign_eligible: usize,
    pub sign_passes: usize,
    pub sign_pass_rate: Option<f64>,
    pub probability_floor: f64,
    /// Binomial standard error of the bound pass rate at the floor.
    pub floor_se: f64,
    pub non_converged_reps: usize,
}

/// Thresholded SBL with `z★ = c₀ log p` at the true noise variance; checks
/// the squared-error bound and exact sign recovery per replication.
pub fn verify_error_bound_and_signs(cfg: &ScenarioConfig, c0: f64, em: &EmConfig) -> Result<BoundReport> {
    check_orthogonal_known(cfg)?;
    if !(c0 > 2.0) || !c0.is_finite() {
        return Err(SblError::InvalidConfig(format!("c0 must exceed 2, got {c0}")));
    }
    if cfg.s < 3 {
        return Err(SblError::InvalidConfig(format!(
            "the error bound needs s >= 3, got s = {}",
            cfg.s
        )));
    }
    let em = fixed_sigma_cfg(em);
    let source = DesignSource::resolve(cfg)?;
    let sigma2 = cfg.sigma_star2();
    let tc = ThresholdConfig::new(c0, 0.0, cfg.p)?;
    let n = cfg.n as f64;
    let per_rep: Vec<(f64, f64, f64, bool, bool)> = (1..=cfg.n_reps)
        .into_par_iter()
        .map(|rep| -> Result<_> {
            let key = rep as u64;
            let x = source.draw(cfg, key)?;
            let (truth, y) = generate_truth_and_response(cfg, &x, key)?;
            let data = Dataset::new(x, y)?;
            let c = data.col_sq_norms().iter().fold(f64::INFINITY, |m, v| m.min(*v)) / n;
            let fit = em_fit(&data, &em, Some(sigma2))?;
            let tf = hard_threshold(&data, &fit, &tc)?;
            let d = &tf.beta_tilde - &truth.beta_star;
            let err2 = d.dot(&d);
            let min_abs = truth
                .support
                .iter()
                .map(|&j| truth.beta_star[j].abs())
                .fold(f64::INFINITY, f64::min);
            let signs = tf
                .beta_tilde
                .iter()
                .zip(truth.beta_star.iter())
                .all(|(b, t)| sign(*b) == sign(*t));
            Ok((c, err2, min_abs, signs, fit.converged))
        })
        .collect::<Result<_>>()?;

    let c = per_rep.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let m = 4.0 * (2.0 + c0) / c;
    let bound = m * sigma2 * cfg.s as f64 * (cfg.p as f64).ln() / n;
    let signal_floor = bound.sqrt();
    let bound_passes = per_rep.iter().filter(|r| r.1 <= bound).count();
    let eligible: Vec<_> = per_rep.iter().filter(|r| r.2 > signal_floor).collect();
    let sign_passes = eligible.iter().filter(|r| r.3).count();
    let floor = bound_probability_floor(cfg.p, cfg.s, c0);
    let reps = cfg.n_reps as f64;
    Ok(BoundReport {
        reps: cfg.n_reps,
        c0,
        c,
        m,
        bound,
        signal_floor,
        bound_passes,
        bound_pass_rate: bound_passes as f64 / reps,
        sign_eligible: eligible.len(),
        sign_passes,
        sign_pass_rate: (!eligible.is_empty()).then(|| sign_passes as f64 / eligible.len() as f64),
        probability_floor: floor,
        floor_se: (floor * (1.0 - floor) / reps).sqrt(),
        non_converged_reps: per_rep.iter().filter(|r| !r.4).count(),
    })
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}
