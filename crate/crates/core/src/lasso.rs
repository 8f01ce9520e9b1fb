//! Cyclic coordinate descent for `(2n)^{-1}‖y − Xβ‖² + λ‖β‖₁` with
//! cross-validated choice of `λ`.
//!
//! With `standardize` on, columns are rescaled to `‖x_j‖² = n` before
//! fitting and coefficients are mapped back to the original scale. There is
//! no intercept.
//!
//! Plain cyclic descent crawls once the active columns are nearly collinear,
//! which is the normal state near the end of a path with `p > n`. Between
//! active-set sweeps the solver therefore tries Anderson extrapolation over
//! recent iterates and a step toward the optimum of the smooth objective on
//! the current sign face. Either move is kept only if it lowers the
//! objective.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::linalg::Cholesky;
use crate::model::Dataset;

const ANDERSON_DEPTH: usize = 5;
const FACE_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub k_folds: usize,
    /// Largest coordinate change (standardized scale) accepted as converged.
    pub cd_tol: f64,
    pub cd_max_sweeps: usize,
    pub standardize: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            k_folds: 10,
            cd_tol: 1e-7,
            cd_max_sweeps: 10_000,
            standardize: true,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SblError::InvalidConfig(m));
        if self.n_lambda == 0 {
            return bad("n_lambda must be at least 1".into());
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return bad(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            ));
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if !(self.cd_tol > 0.0) || !self.cd_tol.is_finite() {
            return bad(format!("cd_tol must be positive, got {}", self.cd_tol));
        }
        if self.cd_max_sweeps == 0 {
            return bad("cd_max_sweeps must be at least 1".into());
        }
        Ok(())
    }
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(2n)^{-1}‖y − Xβ‖² + λ‖β‖₁` on the original scale.
pub fn lasso_objective(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, beta: &Array1<f64>, lambda: f64) -> f64 {
    let r = &y - &x.dot(beta);
    r.dot(&r) / (2.0 * y.len() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the lasso optimality conditions for `beta` at `lambda`,
/// measured in the scale the problem was solved in.
pub fn kkt_residual(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    beta: &Array1<f64>,
    lambda: f64,
    standardize: bool,
) -> f64 {
    let n = y.len() as f64;
    let r = &y - &x.dot(beta);
    let g = x.t().dot(&r) / n;
    let mut worst: f64 = 0.0;
    for j in 0..beta.len() {
        let col = x.column(j);
        let sc = if standardize { (col.dot(&col) / n).sqrt() } else { 1.0 };
        if sc == 0.0 {
            continue;
        }
        let gj = g[j] / sc;
        let v = if beta[j] != 0.0 {
            (gj - lambda * beta[j].signum()).abs()
        } else {
            (gj.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Coordinate-descent state for one design, reusable across a `λ` path.
#[derive(Debug, Clone)]
pub struct CoordinateDescent {
    /// Scaled columns stored as rows for contiguous access.
    cols: Array2<f64>,
    /// `‖x_j‖² / n` of the scaled columns.
    d: Array1<f64>,
    scale: Array1<f64>,
    y: Array1<f64>,
    beta: Array1<f64>,
    resid: Array1<f64>,
    n: f64,
}

impl CoordinateDescent {
    pub fn new(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, standardize: bool) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(SblError::DimensionMismatch {
                what: "lasso response length vs design rows",
                left: y.len(),
                right: n,
            });
        }
        if n == 0 || p == 0 {
            return Err(SblError::InvalidInput("lasso needs a non-empty design".into()));
        }
        let nf = n as f64;
        let mut cols = x.t().as_standard_layout().into_owned();
        let mut scale = Array1::<f64>::ones(p);
        let mut d = Array1::<f64>::zeros(p);
        for (j, mut c) in cols.axis_iter_mut(Axis(0)).enumerate() {
            let sq = c.dot(&c) / nf;
            if standardize && sq > 0.0 {
                let s = sq.sqrt();
                c.mapv_inplace(|v| v / s);
                scale[j] = s;
                d[j] = c.dot(&c) / nf;
            } else {
                d[j] = sq;
            }
        }
        Ok(Self {
            cols,
            d,
            scale,
            y: y.to_owned(),
            beta: Array1::zeros(p),
            resid: y.to_owned(),
            n: nf,
        })
    }

    /// Smallest `λ` at which the all-zero solution is optimal.
    pub fn lambda_max(&self) -> f64 {
        self.cols
            .axis_iter(Axis(0))
            .map(|c| (c.dot(&self.y) / self.n).abs())
            .fold(0.0, f64::max)
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let dj = self.d[j];
        if dj == 0.0 {
            return 0.0;
        }
        let col = self.cols.row(j);
        let old = self.beta[j];
        let z = col.dot(&self.resid) / self.n + dj * old;
        let new = soft_threshold(z, lambda) / dj;
        let delta = new - old;
        if delta != 0.0 {
            self.resid.scaled_add(-delta, &col);
            self.beta[j] = new;
        }
        delta.abs() * dj.sqrt()
    }

    /// One full cyclic pass; returns the largest coordinate change.
    pub fn sweep(&mut self, lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.beta.len() {
            worst = worst.max(self.update(j, lambda));
        }
        worst
    }

    fn sweep_active(&mut self, lambda: f64, active: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for &j in active {
            worst = worst.max(self.update(j, lambda));
        }
        worst
    }

    /// Runs to convergence at `λ`, warm-starting from the current state.
    /// Returns the number of sweeps (full and active-set) used.
    pub fn solve(&mut self, lambda: f64, tol: f64, max_sweeps: usize) -> Result<usize> {
        let mut sweeps = 0;
        loop {
            let change = self.sweep(lambda);
            sweeps += 1;
            if change < tol {
                // residual drifts under many rank-one updates
                self.refresh_residual();
                return Ok(sweeps);
            }
            let active: Vec<usize> = (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect();
            let mut history = Vec::with_capacity(ANDERSON_DEPTH + 1);
            loop {
                if sweeps >= max_sweeps {
                    return Err(SblError::LassoNonConvergence { lambda, sweeps });
                }
                let c = self.sweep_active(lambda, &active);
                sweeps += 1;
                if c < tol {
                    break;
                }
                history.push(active.iter().map(|&j| self.beta[j]).collect::<Array1<f64>>());
                if history.len() == ANDERSON_DEPTH + 1 {
                    self.extrapolate(lambda, &active, &history);
                    history.clear();
                    self.face_step(lambda, &active);
                }
            }
            if sweeps >= max_sweeps {
                return Err(SblError::LassoNonConvergence { lambda, sweeps });
            }
        }
    }

    /// Anderson extrapolation from the last `ANDERSON_DEPTH + 1` active-set
    /// iterates; kept only when it lowers the objective.
    fn extrapolate(&mut self, lambda: f64, active: &[usize], history: &[Array1<f64>]) {
        let k = history.len() - 1;
        let diffs: Vec<Array1<f64>> = (0..k).map(|i| &history[i + 1] - &history[i]).collect();
        let mut gram = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            for j in 0..=i {
                let v = diffs[i].dot(&diffs[j]);
                gram[[i, j]] = v;
                gram[[j, i]] = v;
            }
        }
        let Ok(chol) = Cholesky::factor(gram.view()) else {
            return;
        };
        let z = chol.solve(Array1::<f64>::ones(k).view());
        let total = z.sum();
        if !(total.abs() > 0.0) || !total.is_finite() {
            return;
        }
        let mut cand = Array1::<f64>::zeros(active.len());
        for i in 0..k {
            cand.scaled_add(z[i] / total, &history[i + 1]);
        }
        let before = self.objective(lambda);
        let saved: Vec<f64> = active.iter().map(|&j| self.beta[j]).collect();
        for (i, &j) in active.iter().enumerate() {
            self.beta[j] = cand[i];
        }
        self.refresh_residual();
        if !(self.objective(lambda) < before) {
            for (i, &j) in active.iter().enumerate() {
                self.beta[j] = saved[i];
            }
            self.refresh_residual();
        }
    }

    /// Moves toward the minimizer of the smooth objective on the current sign
    /// face, stopping at whichever zero crossing (or the face optimum) has the
    /// lowest objective. The objective never increases.
    fn face_step(&mut self, lambda: f64, active: &[usize]) {
        let live: Vec<usize> = active.iter().copied().filter(|&j| self.beta[j] != 0.0).collect();
        if live.is_empty() {
            return;
        }
        let xa = self.cols.select(Axis(0), &live);
        let mut gram = xa.dot(&xa.t()) / self.n;
        if live.len() >= self.y.len() {
            // singular face: a small ridge picks a nearby point on it
            let ridge = FACE_RIDGE * gram.diag().iter().fold(0.0, |m: f64, v| m.max(*v));
            gram.diag_mut().mapv_inplace(|v| v + ridge);
        }
        let cur: Array1<f64> = live.iter().map(|&j| self.beta[j]).collect();
        let signs = cur.mapv(f64::signum);
        let rhs = xa.dot(&self.y) / self.n - &(&signs * lambda);
        let Ok(chol) = Cholesky::factor(gram.view()) else {
            return;
        };
        let target = chol.solve(rhs.view());
        if target.iter().any(|v| !v.is_finite()) {
            return;
        }
        let mut stops: Vec<f64> = cur
            .iter()
            .zip(target.iter())
            .filter(|(c, t)| c.signum() != t.signum())
            .map(|(c, t)| c / (c - t))
            .filter(|s| *s > 0.0 && *s < 1.0)
            .collect();
        stops.push(1.0);
        let before = self.objective(lambda);
        let mut best = (before, None);
        for &s in &stops {
            let mut b = &cur + &((&target - &cur) * s);
            // coordinates that crossed (or reached) zero are clamped to it
            for ((v, sg), c) in b.iter_mut().zip(signs.iter()).zip(cur.iter()) {
                if *v * sg <= 1e-12 * c.abs() {
                    *v = 0.0;
                }
            }
            let r = &self.y - &xa.t().dot(&b);
            // every nonzero coefficient is in `live`, so this is the full objective
            let obj = r.dot(&r) / (2.0 * self.n) + lambda * b.iter().map(|v| v.abs()).sum::<f64>();
            if obj < best.0 {
                best = (obj, Some(b));
            }
        }
        if let Some(b) = best.1 {
            for (i, &j) in live.iter().enumerate() {
                self.beta[j] = b[i];
            }
            self.refresh_residual();
        }
    }

    fn refresh_residual(&mut self) {
        let fit = self.cols.t().dot(&self.beta);
        self.resid = &self.y - &fit;
    }

    /// Objective in the scaled coordinates being optimized.
    pub fn objective(&self, lambda: f64) -> f64 {
        self.resid.dot(&self.resid) / (2.0 * self.n) + lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Coefficients on the original column scale.
    pub fn beta(&self) -> Array1<f64> {
        let mut b = &self.beta / &self.scale;
        b.iter_mut().for_each(|v| {
            if *v == 0.0 {
                *v = 0.0;
            }
        });
        b
    }
}

/// Geometric grid from `λ_max` down to `λ_max · lambda_min_ratio`.
pub fn lambda_grid(lambda_max: f64, cfg: &LassoConfig) -> Vec<f64> {
    let m = cfg.n_lambda;
    if m == 1 {
        return vec![lambda_max];
    }
    let step = cfg.lambda_min_ratio.ln() / (m - 1) as f64;
    (0..m).map(|i| lambda_max * (step * i as f64).exp()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambda_path: Vec<f64>,
    /// `p × n_lambda`, one column per `λ`.
    pub beta_path: Array2<f64>,
    pub sweeps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoFit {
    pub path: LassoPath,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub selected_index: usize,
    pub selected_lambda: f64,
    pub beta_hat: Array1<f64>,
}

fn fit_lambdas(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambdas: &[f64],
    cfg: &LassoConfig,
) -> Result<LassoPath> {
    let mut cd = CoordinateDescent::new(x, y, cfg.standardize)?;
    let p = x.ncols();
    let mut beta_path = Array2::zeros((p, lambdas.len()));
    let mut sweeps = Vec::with_capacity(lambdas.len());
    for (i, &lam) in lambdas.iter().enumerate() {
        sweeps.push(cd.solve(lam, cfg.cd_tol, cfg.cd_max_sweeps)?);
        beta_path.column_mut(i).assign(&cd.beta());
    }
    Ok(LassoPath {
        lambda_path: lambdas.to_vec(),
        beta_path,
        sweeps,
    })
}

/// Warm-started path over the default geometric grid.
pub fn cd_fit_path(data: &Dataset, cfg: &LassoConfig) -> Result<LassoPath> {
    cfg.validate()?;
    let cd = CoordinateDescent::new(data.x(), data.y(), cfg.standardize)?;
    let grid = lambda_grid(cd.lambda_max(), cfg);
    fit_lambdas(data.x(), data.y(), &grid, cfg)
}

/// Path over caller-supplied `λ` values (used in the order given).
pub fn cd_fit_lambdas(data: &Dataset, lambdas: &[f64], cfg: &LassoConfig) -> Result<LassoPath> {
    cfg.validate()?;
    if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(SblError::InvalidConfig(
            "lambda values must be finite and non-negative".into(),
        ));
    }
    fit_lambdas(data.x(), data.y(), lambdas, cfg)
}

/// Random near-equal fold assignment.
pub fn assign_folds<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut fold = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold[i] = pos * k / n;
    }
    fold
}

/// K-fold cross-validation with folds drawn from `rng`.
pub fn cv_select<R: Rng + ?Sized>(data: &Dataset, cfg: &LassoConfig, rng: &mut R) -> Result<LassoFit> {
    cfg.validate()?;
    if cfg.k_folds > data.n() {
        return Err(SblError::InvalidConfig(format!(
            "k_folds = {} exceeds the number of observations {}",
            cfg.k_folds,
            data.n()
        )));
    }
    let folds = assign_folds(data.n(), cfg.k_folds, rng);
    cv_select_with_folds(data, cfg, &folds)
}

/// Cross-validation with an explicit fold label per observation.
pub fn cv_select_with_folds(data: &Dataset, cfg: &LassoConfig, folds: &[usize]) -> Result<LassoFit> {
    cfg.validate()?;
    if folds.len() != data.n() {
        return Err(SblError::DimensionMismatch {
            what: "fold labels vs observations",
            left: folds.len(),
            right: data.n(),
        });
    }
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 || (0..k).any(|f| !folds.contains(&f)) {
        return Err(SblError::InvalidConfig(
            "fold labels must cover 0..k with k >= 2 and no empty fold".into(),
        ));
    }
    let path = cd_fit_path(data, cfg)?;
    let lambdas = path.lambda_path.clone();
    let x = data.x();
    let y = data.y();

    let errors: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..data.n()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == f).collect();
            let xt = x.select(Axis(0), &train);
            let yt = y.select(Axis(0), &train);
            let fold_path = fit_lambdas(xt.view(), yt.view(), &lambdas, cfg)?;
            let xv = x.select(Axis(0), &test);
            let yv = y.select(Axis(0), &test);
            let pred = xv.dot(&fold_path.beta_path);
            Ok((0..lambdas.len())
                .map(|l| {
                    let r = &yv - &pred.column(l);
                    r.dot(&r) / test.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let kf = k as f64;
    let m = lambdas.len();
    let mut cv_mean = vec![0.0; m];
    let mut cv_se = vec![0.0; m];
    for l in 0..m {
        let mean = errors.iter().map(|e| e[l]).sum::<f64>() / kf;
        let var = errors.iter().map(|e| (e[l] - mean).powi(2)).sum::<f64>() / (kf - 1.0);
        cv_mean[l] = mean;
        cv_se[l] = (var / kf).sqrt();
    }
    // strict comparison keeps the earliest (largest) lambda on ties
    let mut best = 0;
    for l in 1..m {
        if cv_mean[l] < cv_mean[best] {
            best = l;
        }
    }
    let beta_hat = path.beta_path.column(best).to_owned();
    Ok(LassoFit {
        selected_lambda: lambdas[best],
        selected_index: best,
        beta_hat,
        cv_mean,
        cv_se,
        path,
    })
}
