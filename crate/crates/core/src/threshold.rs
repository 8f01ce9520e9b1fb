//! Hard thresholding of the fitted prior variances.
//!
//! A coordinate survives when `γ̂_j > σ̂² z★ / ‖x_j‖²` with
//! `z★ = c (1 + ρ̂) log p`; the coefficient estimate is then the posterior
//! mean recomputed on the surviving support, not a truncation of `β̂`.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::SblFit;
use crate::error::{Result, SblError};
use crate::model::{Dataset, Evidence, HyperParams};

pub const DEFAULT_MAX_PAIRS: usize = 2_000_000;

pub fn default_c_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 3.0, 4.0]
}

/// Residual term used by [`bic_score`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BicResidual {
    /// `‖y − Xβ̃‖² / (2σ̂²)`.
    #[default]
    Squared,
    /// `‖y − Xβ̃‖ / (2σ̂²)`, the unsquared norm.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub c: f64,
    pub rho_hat: f64,
    pub z_star: f64,
    pub c_grid: Vec<f64>,
}

impl ThresholdConfig {
    /// `z★ = c (1 + ρ̂) log p`.
    pub fn new(c: f64, rho_hat: f64, p: usize) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(SblError::InvalidConfig(format!(
                "threshold constant must be positive, got {c}"
            )));
        }
        if !(0.0..=1.0).contains(&rho_hat) {
            return Err(SblError::InvalidConfig(format!(
                "rho_hat must lie in [0, 1], got {rho_hat}"
            )));
        }
        Ok(Self {
            c,
            rho_hat,
            z_star: c * (1.0 + rho_hat) * (p as f64).ln(),
            c_grid: default_c_grid(),
        })
    }

    /// Degenerate threshold `z★ = 0`: keeps every positive `γ̂_j`.
    pub fn zero() -> Self {
        Self {
            c: 0.0,
            rho_hat: 0.0,
            z_star: 0.0,
            c_grid: default_c_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdedFit {
    pub hp_tilde: HyperParams,
    pub beta_tilde: Array1<f64>,
    pub kept: Vec<usize>,
    pub bic: f64,
    pub c: f64,
    pub z_star: f64,
}

/// Largest absolute cosine between distinct columns.
///
/// Exact when the number of pairs is at most `max_pairs`; otherwise the
/// maximum over `max_pairs` pairs drawn uniformly with `rng`.
pub fn estimate_rho_hat<R: Rng + ?Sized>(data: &Dataset, max_pairs: Option<usize>, rng: &mut R) -> Result<f64> {
    let p = data.p();
    if p < 2 {
        return Err(SblError::InvalidInput(
            "column correlation needs at least two columns".into(),
        ));
    }
    let norms = data.col_sq_norms().mapv(f64::sqrt);
    let total = p * (p - 1) / 2;
    let cosine = |j: usize, k: usize| -> f64 { data.column(j).dot(&data.column(k)).abs() / (norms[j] * norms[k]) };
    let rho = match max_pairs {
        Some(m) if total > m => (0..m)
            .map(|_| {
                let j = rng.random_range(0..p);
                let mut k = rng.random_range(0..p - 1);
                if k >= j {
                    k += 1;
                }
                cosine(j, k)
            })
            .fold(0.0, f64::max),
        _ => {
            let gram = data.x().t().dot(&data.x());
            let mut best: f64 = 0.0;
            for j in 0..p {
                for k in j + 1..p {
                    best = best.max(gram[[j, k]].abs() / (norms[j] * norms[k]));
                }
            }
            best
        }
    };
    Ok(rho.clamp(0.0, 1.0))
}

/// Applies the threshold rule to `fit` and recomputes the posterior mean.
pub fn hard_threshold(data: &Dataset, fit: &SblFit, tc: &ThresholdConfig) -> Result<ThresholdedFit> {
    hard_threshold_with(data, fit, tc, BicResidual::Squared)
}

pub fn hard_threshold_with(
    data: &Dataset,
    fit: &SblFit,
    tc: &ThresholdConfig,
    bic: BicResidual,
) -> Result<ThresholdedFit> {
    if !tc.z_star.is_finite() || tc.z_star < 0.0 {
        return Err(SblError::InvalidConfig(format!(
            "z_star must be finite and non-negative, got {}",
            tc.z_star
        )));
    }
    if fit.hp.p() != data.p() {
        return Err(SblError::DimensionMismatch {
            what: "fit vs dataset columns",
            left: fit.hp.p(),
            right: data.p(),
        });
    }
    let sigma2 = fit.hp.sigma2;
    let norms = data.col_sq_norms();
    let mut gamma = Array1::zeros(data.p());
    let mut kept = Vec::new();
    for (j, &g) in fit.hp.gamma.iter().enumerate() {
        if g > 0.0 && g > sigma2 * tc.z_star / norms[j] {
            gamma[j] = g;
            kept.push(j);
        }
    }
    let hp_tilde = HyperParams { gamma, sigma2 };
    let beta_tilde = Evidence::compute(data, &hp_tilde)?.beta(data.p());
    let mut out = ThresholdedFit {
        hp_tilde,
        beta_tilde,
        kept,
        bic: 0.0,
        c: tc.c,
        z_star: tc.z_star,
    };
    out.bic = bic_score_with(data, &out, bic);
    Ok(out)
}

/// `‖y − Xβ̃‖² / (2σ̂²) + |kept| log n`.
pub fn bic_score(data: &Dataset, tfit: &ThresholdedFit) -> f64 {
    bic_score_with(data, tfit, BicResidual::Squared)
}

pub fn bic_score_with(data: &Dataset, tfit: &ThresholdedFit, kind: BicResidual) -> f64 {
    let r = &data.y() - &data.x().dot(&tfit.beta_tilde);
    let rss = r.dot(&r);
    let fit_term = match kind {
        BicResidual::Squared => rss,
        BicResidual::Literal => rss.sqrt(),
    };
    fit_term / (2.0 * tfit.hp_tilde.sigma2) + tfit.kept.len() as f64 * (data.n() as f64).ln()
}

/// Picks the grid constant with the smallest BIC; ties go to the larger `c`.
pub fn select_threshold(
    data: &Dataset,
    fit: &SblFit,
    c_grid: &[f64],
    rho_hat: f64,
    bic: BicResidual,
) -> Result<ThresholdedFit> {
    if c_grid.is_empty() {
        return Err(SblError::InvalidConfig("threshold grid is empty".into()));
    }
    let mut best: Option<ThresholdedFit> = None;
    for &c in c_grid {
        let mut tc = ThresholdConfig::new(c, rho_hat, data.p())?;
        tc.c_grid = c_grid.to_vec();
        let cand = hard_threshold_with(data, fit, &tc, bic)?;
        best = match best {
            None => Some(cand),
            Some(b) if cand.bic < b.bic || (cand.bic == b.bic && cand.c > b.c) => Some(cand),
            keep => keep,
        };
    }
    Ok(best.expect("non-empty grid"))
}
