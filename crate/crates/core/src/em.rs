//! Evidence maximization by expectation-maximization.
//!
//! One EM map takes `(σ², γ)` to
//!
//! ```text
//! γ_j ← μ_j² + σ² V_jj
//! σ²  ← (‖y − X μ‖² + σ² Tr(V X'X)) / n
//! ```
//!
//! with `μ`, `V` the posterior moments at the current point. EM only reaches
//! the boundary `γ_j = 0` in the limit, and sublinearly: the scalar map has
//! slope exactly one at zero. Two pruning rules turn that decay into exact,
//! absorbing zeros:
//!
//! * boundary pruning: a coordinate whose scaled variance `γ_j‖x_j‖²/σ²` is
//!   at most `boundary_window` and whose leave-one-out statistics put the
//!   coordinate-wise maximizer of `ℓ` at zero (`Q_j² ≤ S_j`) is set to zero.
//!   `ℓ` is decreasing in `γ_j` on the whole half-line in that case, so the
//!   move never lowers the likelihood;
//! * floor pruning: after the update, coordinates with scaled variance
//!   at most `prune_threshold` are set to zero.
//!
//! Near a positive fixed point the map contracts at rate `1 − O(ε²)` where
//! `ε` measures the distance of the coordinate from the zero branch, so the
//! default driver wraps the EM map in a squared-extrapolation (SQUAREM)
//! scheme with a likelihood safeguard. Every recorded `ℓ` is still
//! non-decreasing.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::model::{coordinate_argmax, Dataset, Evidence, HyperParams, ACTIVE_EPS};

/// Tolerance on `|cos(x_j, x_k)|` accepted as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Relative change of `γ` (and `σ²`) below which the iteration may stop.
    pub tol_gamma: f64,
    /// Largest relative coordinate-wise stationarity residual accepted at stop.
    pub tol_stationarity: f64,
    /// Slack used when checking that the `ℓ` trace is non-decreasing.
    pub tol_ell: f64,
    /// Floor on `γ_j‖x_j‖²/σ²` below which a coordinate is pruned.
    pub prune_threshold: f64,
    /// Scaled variance at or below which boundary pruning is considered.
    pub boundary_window: f64,
    pub estimate_sigma2: bool,
    pub gamma_init: f64,
    pub sigma2_init_fraction: f64,
    /// Lower bound on the estimated `σ²` as a fraction of the response
    /// variance; 0 disables it.
    pub sigma2_floor_fraction: f64,
    /// Squared-extrapolation acceleration of the EM map.
    pub accelerate: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol_gamma: 1e-8,
            tol_stationarity: 1e-8,
            tol_ell: 1e-10,
            prune_threshold: 1e-8,
            boundary_window: 1.0,
            estimate_sigma2: true,
            gamma_init: 1.0,
            sigma2_init_fraction: 0.1,
            sigma2_floor_fraction: 1e-6,
            accelerate: true,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_gamma", self.tol_gamma),
            ("tol_stationarity", self.tol_stationarity),
            ("tol_ell", self.tol_ell),
            ("prune_threshold", self.prune_threshold),
            ("boundary_window", self.boundary_window),
            ("gamma_init", self.gamma_init),
            ("sigma2_init_fraction", self.sigma2_init_fraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SblError::InvalidConfig(format!(
                    "em.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.sigma2_floor_fraction >= 0.0) || self.sigma2_floor_fraction >= self.sigma2_init_fraction {
            return Err(SblError::InvalidConfig(format!(
                "em.sigma2_floor_fraction must lie in [0, sigma2_init_fraction), got {}",
                self.sigma2_floor_fraction
            )));
        }
        if self.max_iters == 0 {
            return Err(SblError::InvalidConfig("em.max_iters must be positive".into()));
        }
        if self.gamma_init < ACTIVE_EPS {
            return Err(SblError::InvalidConfig(format!(
                "em.gamma_init must be at least {ACTIVE_EPS}"
            )));
        }
        Ok(())
    }

    /// Fixed-noise configuration.
    pub fn fixed_sigma2() -> Self {
        Self {
            estimate_sigma2: false,
            ..Self::default()
        }
    }
}

/// Result of [`em_fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SblFit {
    pub hp: HyperParams,
    pub beta_hat: Array1<f64>,
    /// `ℓ` at every accepted iterate.
    pub ell_trace: Vec<f64>,
    /// Number of EM map evaluations.
    pub iters: usize,
    pub converged: bool,
    /// Coordinates with `γ_j = 0` at the end.
    pub pruned: Vec<usize>,
    /// Whether `ell_trace` was non-decreasing up to `tol_ell`.
    pub monotone: bool,
}

impl SblFit {
    /// Largest drop between consecutive entries of the `ℓ` trace (0 if none).
    pub fn max_ell_decrease(&self) -> f64 {
        self.ell_trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

struct StepOutcome {
    /// The input point after boundary pruning; `ell` and `residual` refer to it.
    start: HyperParams,
    next: HyperParams,
    ell: f64,
    residual: f64,
}

fn scaled_variance(data: &Dataset, j: usize, gamma: f64, sigma2: f64) -> f64 {
    gamma * data.col_sq_norms()[j] / sigma2
}

/// Boundary pruning at `hp`; returns the (possibly) pruned point and its evidence.
fn boundary_prune(data: &Dataset, hp: &HyperParams, cfg: &EmConfig) -> Result<(HyperParams, Evidence)> {
    let ev = Evidence::compute(data, hp)?;
    let candidates: Vec<(usize, f64)> = ev
        .support
        .iter()
        .enumerate()
        .filter_map(|(i, &j)| {
            let g = ev.gamma_active[i];
            let (s, q) = (ev.loo_s[i], ev.loo_q[i]);
            let in_window = scaled_variance(data, j, g, hp.sigma2) <= cfg.boundary_window;
            (in_window && q * q <= s).then(|| {
                // ℓ(γ_j = 0) − ℓ(γ_j)
                let d = 1.0 + g * s;
                (j, 0.5 * d.ln() - 0.5 * g * q * q / d)
            })
        })
        .collect();
    if candidates.is_empty() {
        return Ok((hp.clone(), ev));
    }
    let mut joint = hp.clone();
    for &(j, _) in &candidates {
        joint.gamma[j] = 0.0;
    }
    let ev_joint = Evidence::compute(data, &joint)?;
    if ev_joint.ell >= ev.ell || candidates.len() == 1 {
        return Ok((joint, ev_joint));
    }
    // Jointly zeroing can interact through C; fall back to the single best move.
    let (best, _) =
        candidates.iter().copied().fold(
            (candidates[0].0, f64::NEG_INFINITY),
            |acc, c| {
                if c.1 > acc.1 {
                    c
                } else {
                    acc
                }
            },
        );
    let mut single = hp.clone();
    single.gamma[best] = 0.0;
    let ev_single = Evidence::compute(data, &single)?;
    Ok((single, ev_single))
}

fn step(data: &Dataset, hp: &HyperParams, cfg: &EmConfig) -> Result<StepOutcome> {
    let (start, ev) = boundary_prune(data, hp, cfg)?;
    let sigma2 = start.sigma2;
    let n = data.n() as f64;

    let mut residual: f64 = 0.0;
    let mut gamma = Array1::zeros(data.p());
    let mut trace_term = 0.0;
    for (i, &j) in ev.support.iter().enumerate() {
        let g = ev.gamma_active[i];
        gamma[j] = ev.mu[i] * ev.mu[i] + ev.post_var[i];
        trace_term += 1.0 - ev.post_var[i] / g;
        let rhs = coordinate_argmax(ev.loo_s[i], ev.loo_q[i]);
        residual = residual.max((g - rhs).abs() / (1.0 + g));
    }
    let next_sigma2 = if cfg.estimate_sigma2 {
        let v = (ev.rss() + sigma2 * trace_term) / n;
        if !(v > 0.0) || !v.is_finite() {
            return Err(SblError::InvalidInput(format!(
                "noise variance update produced {v}; response carries no variation"
            )));
        }
        // The σ² part of the EM objective is unimodal, so clamping keeps the step monotone.
        v.max(sigma2_floor(data, cfg))
    } else {
        sigma2
    };
    for &j in &ev.support {
        if scaled_variance(data, j, gamma[j], next_sigma2) <= cfg.prune_threshold {
            gamma[j] = 0.0;
        }
    }
    Ok(StepOutcome {
        start,
        next: HyperParams {
            gamma,
            sigma2: next_sigma2,
        },
        ell: ev.ell,
        residual,
    })
}

/// One EM update (with pruning) from `hp`.
pub fn em_step(data: &Dataset, hp: &HyperParams, cfg: &EmConfig) -> Result<HyperParams> {
    cfg.validate()?;
    Ok(step(data, hp, cfg)?.next)
}

fn max_rel_change(a: &HyperParams, b: &HyperParams) -> f64 {
    a.gamma
        .iter()
        .zip(b.gamma.iter())
        .map(|(x, y)| (x - y).abs() / (1.0 + x))
        .fold(0.0, f64::max)
}

fn is_converged(o: &StepOutcome, cfg: &EmConfig) -> bool {
    let sigma_ok =
        !cfg.estimate_sigma2 || (o.next.sigma2 - o.start.sigma2).abs() / (1.0 + o.start.sigma2) < cfg.tol_gamma;
    sigma_ok && max_rel_change(&o.start, &o.next) < cfg.tol_gamma && o.residual < cfg.tol_stationarity
}

/// Sample variance of `y`, or `‖y‖²/n` for a constant response.
fn response_scale(data: &Dataset) -> f64 {
    let y = data.y();
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        var
    } else {
        data.yty() / n
    }
}

fn sigma2_floor(data: &Dataset, cfg: &EmConfig) -> f64 {
    cfg.sigma2_floor_fraction * response_scale(data)
}

fn initial_sigma2(data: &Dataset, cfg: &EmConfig) -> Result<f64> {
    let var = response_scale(data);
    if !(var > 0.0) {
        return Err(SblError::InvalidInput(
            "response is identically zero; fix the noise variance instead of estimating it".into(),
        ));
    }
    Ok(cfg.sigma2_init_fraction * var)
}

/// Candidate point `θ0 − 2αr + α²v`, with coordinates inactive in `last` held at zero.
fn extrapolate(
    theta0: &HyperParams,
    theta1: &HyperParams,
    last: &HyperParams,
    alpha: f64,
    estimate_sigma2: bool,
    sigma2_floor: f64,
) -> Option<HyperParams> {
    let mut gamma = Array1::zeros(theta0.p());
    for j in 0..theta0.p() {
        if last.gamma[j] == 0.0 {
            continue;
        }
        let (a, b, c) = (theta0.gamma[j], theta1.gamma[j], last.gamma[j]);
        let g = a - 2.0 * alpha * (b - a) + alpha * alpha * (c - 2.0 * b + a);
        if !(g >= ACTIVE_EPS) || !g.is_finite() {
            return None;
        }
        gamma[j] = g;
    }
    let sigma2 = if estimate_sigma2 {
        let (a, b, c) = (theta0.sigma2, theta1.sigma2, last.sigma2);
        let s2 = a - 2.0 * alpha * (b - a) + alpha * alpha * (c - 2.0 * b + a);
        if !(s2 > 0.0) || !s2.is_finite() {
            return None;
        }
        s2.max(sigma2_floor)
    } else {
        theta0.sigma2
    };
    Some(HyperParams { gamma, sigma2 })
}

fn step_length(theta0: &HyperParams, theta1: &HyperParams, last: &HyperParams, estimate_sigma2: bool) -> f64 {
    let mut rr = 0.0;
    let mut vv = 0.0;
    let mut add = |a: f64, b: f64, c: f64| {
        let r = b - a;
        let v = c - 2.0 * b + a;
        rr += r * r;
        vv += v * v;
    };
    for j in 0..theta0.p() {
        if last.gamma[j] != 0.0 {
            add(theta0.gamma[j], theta1.gamma[j], last.gamma[j]);
        }
    }
    if estimate_sigma2 {
        add(theta0.sigma2, theta1.sigma2, last.sigma2);
    }
    if vv > 0.0 {
        -(rr / vv).sqrt()
    } else {
        -1.0
    }
}

const MAX_BACKTRACKS: usize = 6;

/// Fits `(σ², γ)` by EM and returns the posterior-mean coefficients at the limit.
///
/// Pass `fixed_sigma2` to hold the noise variance (requires
/// `cfg.estimate_sigma2 == false`). Running out of iterations is reported
/// through `converged`, not as an error.
pub fn em_fit(data: &Dataset, cfg: &EmConfig, fixed_sigma2: Option<f64>) -> Result<SblFit> {
    cfg.validate()?;
    let sigma2 = match fixed_sigma2 {
        Some(_) if cfg.estimate_sigma2 => {
            return Err(SblError::InvalidConfig(
                "fixed noise variance given while em.estimate_sigma2 is true".into(),
            ))
        }
        Some(s2) => s2,
        None => initial_sigma2(data, cfg)?,
    };
    let floor = sigma2_floor(data, cfg);
    let mut theta = HyperParams::uniform(data.p(), cfg.gamma_init, sigma2)?;
    let mut trace = Vec::new();
    let mut iters = 0usize;
    let mut converged = false;

    let run = |theta: &HyperParams, iters: &mut usize| -> Result<StepOutcome> {
        *iters += 1;
        step(data, theta, cfg).map_err(|e| e.at_iteration(*iters))
    };

    while iters < cfg.max_iters {
        let o0 = run(&theta, &mut iters)?;
        trace.push(o0.ell);
        if is_converged(&o0, cfg) {
            theta = o0.start;
            converged = true;
            break;
        }
        if o0.next.support().is_empty() {
            // Everything pruned: the remaining map only rescales σ².
            theta = o0.next;
            let ev = Evidence::compute(data, &theta)?;
            trace.push(ev.ell);
            converged = true;
            break;
        }
        if !cfg.accelerate || iters >= cfg.max_iters {
            theta = o0.next;
            continue;
        }

        let o1 = run(&o0.next, &mut iters)?;
        trace.push(o1.ell);
        if is_converged(&o1, cfg) {
            theta = o1.start;
            converged = true;
            break;
        }
        let (t0, t1, t2) = (&o0.start, &o1.start, &o1.next);
        let mut alpha = step_length(t0, t1, t2, cfg.estimate_sigma2);
        let mut accepted = None;
        let mut tries = 0;
        while alpha < -1.0 && tries < MAX_BACKTRACKS && iters < cfg.max_iters {
            tries += 1;
            if let Some(cand) = extrapolate(t0, t1, t2, alpha, cfg.estimate_sigma2, floor) {
                // A failed factorization at an extrapolated point just means reject it.
                iters += 1;
                if let Ok(o) = step(data, &cand, cfg) {
                    if o.ell >= o1.ell {
                        accepted = Some(o);
                        break;
                    }
                }
            }
            alpha = (alpha - 1.0) / 2.0;
            if alpha > -1.0 + 1e-3 {
                break;
            }
        }
        theta = match accepted {
            Some(o) => {
                trace.push(o.ell);
                o.next
            }
            None => o1.next,
        };
    }

    let beta_hat = Evidence::compute(data, &theta)?.beta(data.p());
    let pruned = theta
        .gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| **g == 0.0)
        .map(|(j, _)| j)
        .collect();
    let monotone = trace.windows(2).all(|w| w[1] >= w[0] - cfg.tol_ell);
    Ok(SblFit {
        hp: theta,
        beta_hat,
        ell_trace: trace,
        iters,
        converged,
        pruned,
        monotone,
    })
}

/// Closed-form maximizer of `ℓ` over `γ` for a design with orthogonal columns
/// and known `σ²`: `γ_j = (⟨y,x_j⟩² − σ²‖x_j‖²)/‖x_j‖⁴` when positive, else 0.
pub fn orthogonal_closed_form(data: &Dataset, sigma2: f64) -> Result<HyperParams> {
    orthogonal_closed_form_with_tol(data, sigma2, ORTHOGONALITY_TOL)
}

pub fn orthogonal_closed_form_with_tol(data: &Dataset, sigma2: f64, orth_tol: f64) -> Result<HyperParams> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(SblError::InvalidInput(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    if data.p() > data.n() {
        return Err(SblError::InvalidInput(format!(
            "p = {} > n = {}: non-zero columns cannot be pairwise orthogonal",
            data.p(),
            data.n()
        )));
    }
    check_orthogonal(data, orth_tol)?;
    let norms = data.col_sq_norms();
    let xty = data.xty();
    let gamma = Array1::from_shape_fn(data.p(), |j| {
        let a = norms[j];
        let b = xty[j] * xty[j];
        if b > sigma2 * a {
            (b - sigma2 * a) / (a * a)
        } else {
            0.0
        }
    });
    HyperParams::new(gamma, sigma2)
}

/// Errors with the worst offending pair when columns are not orthogonal.
pub fn check_orthogonal(data: &Dataset, orth_tol: f64) -> Result<()> {
    let gram = data.x().t().dot(&data.x());
    let norms = data.col_sq_norms();
    let mut worst = (0, 0, 0.0f64);
    for j in 0..data.p() {
        for k in j + 1..data.p() {
            let c = gram[[j, k]].abs() / (norms[j] * norms[k]).sqrt();
            if c > worst.2 {
                worst = (j, k, c);
            }
        }
    }
    if worst.2 > orth_tol {
        return Err(SblError::NotOrthogonal {
            j: worst.0,
            k: worst.1,
            cosine: worst.2,
        });
    }
    Ok(())
}

/// Per-coordinate `|γ̂_j − γ*_j|`, where `γ*_j` is the coordinate-wise
/// maximizer of `ℓ` given the other fitted coordinates.
pub fn stationarity_diagnostic(data: &Dataset, fit: &SblFit) -> Result<Array1<f64>> {
    let ev = Evidence::compute(data, &fit.hp)?;
    let mut out = Array1::zeros(data.p());
    for j in 0..data.p() {
        let (s, q) = ev.loo_stats(data, j);
        out[j] = (fit.hp.gamma[j] - coordinate_argmax(s, q)).abs();
    }
    Ok(out)
}

/// The scalar EM recursion for one column of an orthogonal design: `γ ← B/(a + σ²/γ)² + σ²/(a + σ²/γ)` with `B = ⟨x,y⟩²`,
/// `a = ‖x‖²`.
pub fn orthogonal_recursion(xy2: f64, sq_norm: f64, sigma2: f64, gamma: f64) -> f64 {
    let d = sq_norm + sigma2 / gamma;
    xy2 / (d * d) + sigma2 / d
}
