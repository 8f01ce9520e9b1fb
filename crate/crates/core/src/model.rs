//! The Gaussian linear model with a per-coordinate variance prior.
//!
//! Under `y = Xβ + ε`, `ε ~ N(0, σ² I)` and independent priors
//! `β_j ~ N(0, γ_j)` (a point mass at zero when `γ_j = 0`), the marginal
//! law of `y` is `N(0, C)` with `C = σ² I + Σ_{γ_j > 0} γ_j x_j x_j'`.
//! Everything here is computed without ever storing `C` when the active
//! set is smaller than `n`: the determinant lemma and Woodbury identity
//! reduce the work to a `k × k` Cholesky factor of
//! `A = X_a'X_a + σ² Γ_a⁻¹`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::linalg::Cholesky;

/// Variances below this are treated as exact zeros when forming the support.
pub const ACTIVE_EPS: f64 = 1e-12;

/// Response vector and design matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    col_sq_norms: Array1<f64>,
    xty: Array1<f64>,
    yty: f64,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(SblError::InvalidInput(format!(
                "design must be non-empty, got {n} x {p}"
            )));
        }
        if y.len() != n {
            return Err(SblError::DimensionMismatch {
                what: "response length vs design rows",
                left: y.len(),
                right: n,
            });
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(SblError::InvalidInput(format!(
                "non-finite design entry at row {i}, column {j}"
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(SblError::InvalidInput(format!("non-finite response entry at row {i}")));
        }
        let col_sq_norms = x.map_axis(Axis(0), |c| c.dot(&c));
        if let Some(j) = col_sq_norms.iter().position(|&v| v <= 0.0) {
            return Err(SblError::ZeroColumn(j));
        }
        let xty = x.t().dot(&y);
        let yty = y.dot(&y);
        Ok(Self {
            x,
            y,
            col_sq_norms,
            xty,
            yty,
        })
    }

    /// Same design, new response.
    pub fn with_response(&self, y: Array1<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(SblError::DimensionMismatch {
                what: "response length vs design rows",
                left: y.len(),
                right: self.n(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(SblError::InvalidInput(format!("non-finite response entry at row {i}")));
        }
        let xty = self.x.t().dot(&y);
        let yty = y.dot(&y);
        Ok(Self {
            x: self.x.clone(),
            y,
            col_sq_norms: self.col_sq_norms.clone(),
            xty,
            yty,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.x.column(j)
    }

    /// `‖x_j‖²` for every column.
    pub fn col_sq_norms(&self) -> ArrayView1<'_, f64> {
        self.col_sq_norms.view()
    }

    /// `X'y`.
    pub fn xty(&self) -> ArrayView1<'_, f64> {
        self.xty.view()
    }

    /// `‖y‖²`.
    pub fn yty(&self) -> f64 {
        self.yty
    }
}

/// Prior variances `γ` and noise variance `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma: Array1<f64>,
    pub sigma2: f64,
}

impl HyperParams {
    pub fn new(gamma: Array1<f64>, sigma2: f64) -> Result<Self> {
        let hp = Self { gamma, sigma2 };
        hp.validate()?;
        Ok(hp)
    }

    pub fn uniform(p: usize, gamma: f64, sigma2: f64) -> Result<Self> {
        Self::new(Array1::from_elem(p, gamma), sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(SblError::InvalidInput(format!(
                "noise variance must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if let Some(j) = self.gamma.iter().position(|g| !g.is_finite() || *g < 0.0) {
            return Err(SblError::InvalidInput(format!(
                "gamma[{j}] = {} is not a finite non-negative value",
                self.gamma[j]
            )));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    /// Sorted indices with `γ_j ≥ ACTIVE_EPS`.
    pub fn support(&self) -> Vec<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter(|(_, &g)| g >= ACTIVE_EPS)
            .map(|(j, _)| j)
            .collect()
    }

    fn check_against(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if self.p() != data.p() {
            return Err(SblError::DimensionMismatch {
                what: "gamma length vs design columns",
                left: self.p(),
                right: data.p(),
            });
        }
        Ok(())
    }
}

/// Posterior mean and covariance factor restricted to the support.
///
/// The posterior of `β_a` is `N(mu, σ² v)`; coordinates off the support are
/// exactly zero.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub support: Vec<usize>,
    pub mu: Array1<f64>,
    pub v: Array2<f64>,
}

impl PosteriorMoments {
    /// Scatter `mu` into a length-`p` vector.
    pub fn scatter(&self, p: usize) -> Array1<f64> {
        let mut beta = Array1::zeros(p);
        for (&j, &m) in self.support.iter().zip(self.mu.iter()) {
            beta[j] = m;
        }
        beta
    }
}

/// True coefficients and noise level behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_star: Array1<f64>,
    pub sigma_star2: f64,
    pub support: Vec<usize>,
    pub s: usize,
}

impl GroundTruth {
    pub fn new(beta_star: Array1<f64>, sigma_star2: f64) -> Self {
        let support: Vec<usize> = beta_star
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        let s = support.len();
        Self {
            beta_star,
            sigma_star2,
            support,
            s,
        }
    }
}

/// Which factorization backs an [`Evidence`] evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// `k × k` factor when the support is smaller than `n`, `n × n` otherwise.
    Auto,
    Woodbury,
    Dense,
}

#[derive(Debug, Clone)]
enum Factor {
    /// Cholesky of `A = X_a'X_a + σ² Γ_a⁻¹`, `X_a` and the residual `y - X_a μ`.
    Woodbury {
        chol: Cholesky,
        xa: Array2<f64>,
        resid: Array1<f64>,
    },
    /// Cholesky of `C` and `u = C⁻¹ y`.
    Dense { chol: Cholesky, u: Array1<f64> },
}

/// Marginal likelihood and posterior summaries at one hyperparameter value.
///
/// `loo_s[i]`, `loo_q[i]` are `x_j'C_j⁻¹x_j` and `x_j'C_j⁻¹y` for the
/// `i`-th support index `j`, where `C_j` drops coordinate `j` from `C`.
#[derive(Debug, Clone)]
pub struct Evidence {
    pub support: Vec<usize>,
    pub sigma2: f64,
    pub gamma_active: Array1<f64>,
    pub ell: f64,
    /// Posterior mean over the support.
    pub mu: Array1<f64>,
    /// Posterior variances `σ² V_jj` over the support.
    pub post_var: Array1<f64>,
    pub loo_s: Array1<f64>,
    pub loo_q: Array1<f64>,
    factor: Factor,
}

impl Evidence {
    pub fn compute(data: &Dataset, hp: &HyperParams) -> Result<Self> {
        Self::with_route(data, hp, Route::Auto)
    }

    pub fn with_route(data: &Dataset, hp: &HyperParams, route: Route) -> Result<Self> {
        hp.check_against(data)?;
        let support = hp.support();
        let dense = match route {
            Route::Auto => support.len() >= data.n(),
            Route::Woodbury => false,
            Route::Dense => true,
        };
        if dense {
            Self::dense(data, hp, support)
        } else {
            Self::woodbury(data, hp, support)
        }
    }

    fn woodbury(data: &Dataset, hp: &HyperParams, support: Vec<usize>) -> Result<Self> {
        let n = data.n();
        let k = support.len();
        let sigma2 = hp.sigma2;
        let gamma_active = hp.gamma.select(Axis(0), &support);
        let xa = data.x().select(Axis(1), &support);
        let mut a = xa.t().dot(&xa);
        for (i, g) in gamma_active.iter().enumerate() {
            a[[i, i]] += sigma2 / g;
        }
        let chol = Cholesky::factor(a.view())?;
        let b = data.xty().select(Axis(0), &support);
        let mu = chol.solve(b.view());
        let log_det_c =
            (n as f64 - k as f64) * sigma2.ln() + gamma_active.iter().map(|g| g.ln()).sum::<f64>() + chol.log_det();
        // y'C⁻¹y = ‖y - X_a μ‖²/σ² + μ'Γ_a⁻¹μ; avoids cancelling y'y against μ'X_a'y
        // when the fit nearly interpolates and σ² is small.
        let resid = &data.y() - &xa.dot(&mu);
        let quad = resid.dot(&resid) / sigma2 + mu.iter().zip(gamma_active.iter()).map(|(m, g)| m * m / g).sum::<f64>();
        let ell = -0.5 * (log_det_c + quad);

        let d = chol.inverse_diag();
        let post_var = &d * sigma2;
        let loo_s = Array1::from_shape_fn(k, |i| 1.0 / post_var[i] - 1.0 / gamma_active[i]);
        let loo_q = Array1::from_shape_fn(k, |i| mu[i] / post_var[i]);
        Ok(Self {
            support,
            sigma2,
            gamma_active,
            ell,
            mu,
            post_var,
            loo_s,
            loo_q,
            factor: Factor::Woodbury { chol, xa, resid },
        })
    }

    fn dense(data: &Dataset, hp: &HyperParams, support: Vec<usize>) -> Result<Self> {
        let n = data.n();
        let k = support.len();
        let sigma2 = hp.sigma2;
        let gamma_active = hp.gamma.select(Axis(0), &support);
        let xa = data.x().select(Axis(1), &support);
        let mut scaled = xa.clone();
        for (mut col, g) in scaled.columns_mut().into_iter().zip(gamma_active.iter()) {
            col *= *g;
        }
        let mut c = scaled.dot(&xa.t());
        for i in 0..n {
            c[[i, i]] += sigma2;
        }
        let chol = Cholesky::factor(c.view())?;
        let u = chol.solve(data.y());
        let ell = -0.5 * (chol.log_det() + data.y().dot(&u));

        let w = chol.forward_matrix(xa.view());
        let s_full = w.map_axis(Axis(0), |c| c.dot(&c));
        let q_full = xa.t().dot(&u);
        let mu = &gamma_active * &q_full;
        let post_var = Array1::from_shape_fn(k, |i| {
            let g = gamma_active[i];
            g - g * g * s_full[i]
        });
        // 1 - γ s = σ²V_jj / γ
        let loo_s = Array1::from_shape_fn(k, |i| s_full[i] * gamma_active[i] / post_var[i]);
        let loo_q = Array1::from_shape_fn(k, |i| q_full[i] * gamma_active[i] / post_var[i]);
        Ok(Self {
            support,
            sigma2,
            gamma_active,
            ell,
            mu,
            post_var,
            loo_s,
            loo_q,
            factor: Factor::Dense { chol, u },
        })
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn position(&self, j: usize) -> Option<usize> {
        self.support.binary_search(&j).ok()
    }

    /// `(x_j'C⁻¹x_j, x_j'C⁻¹y)` with the full covariance `C`.
    pub fn full_stats(&self, data: &Dataset, j: usize) -> (f64, f64) {
        let xj = data.column(j);
        match &self.factor {
            Factor::Woodbury { chol, xa, resid } => {
                let h = xa.t().dot(&xj);
                let w = chol.forward(h.view());
                let s = (data.col_sq_norms()[j] - w.dot(&w)) / self.sigma2;
                let q = xj.dot(resid) / self.sigma2;
                (s, q)
            }
            Factor::Dense { chol, u } => {
                let w = chol.forward(xj);
                (w.dot(&w), xj.dot(u))
            }
        }
    }

    /// `(x_j'C_j⁻¹x_j, x_j'C_j⁻¹y)` where `C_j` excludes coordinate `j`.
    pub fn loo_stats(&self, data: &Dataset, j: usize) -> (f64, f64) {
        match self.position(j) {
            Some(i) => (self.loo_s[i], self.loo_q[i]),
            None => self.full_stats(data, j),
        }
    }

    /// Residual sum of squares `‖y - X_a μ‖²`.
    pub fn rss(&self) -> f64 {
        match &self.factor {
            Factor::Woodbury { resid, .. } => resid.dot(resid),
            Factor::Dense { u, .. } => self.sigma2 * self.sigma2 * u.dot(u),
        }
    }

    pub fn beta(&self, p: usize) -> Array1<f64> {
        let mut beta = Array1::zeros(p);
        for (&j, &m) in self.support.iter().zip(self.mu.iter()) {
            beta[j] = m;
        }
        beta
    }
}

/// Coordinate-wise maximizer of `ℓ` in `γ_j` with the other coordinates
/// held fixed, given the leave-one-out statistics `S = x_j'C_j⁻¹x_j` and
/// `Q = x_j'C_j⁻¹y`.
pub fn coordinate_argmax(s: f64, q: f64) -> f64 {
    let q2 = q * q;
    if q2 > s {
        (q2 - s) / (s * s)
    } else {
        0.0
    }
}

/// `∂ℓ/∂γ_j` from the leave-one-out statistics.
pub fn coordinate_gradient(s: f64, q: f64, gamma_j: f64) -> f64 {
    let den = 1.0 + gamma_j * s;
    0.5 * (q * q - gamma_j * s * s - s) / (den * den)
}

/// Log marginal likelihood `ℓ(σ², γ) = -½ log det C - ½ y'C⁻¹y`, without the
/// `-(n/2) log 2π` constant.
pub fn log_marginal_likelihood(data: &Dataset, hp: &HyperParams) -> Result<f64> {
    Ok(Evidence::compute(data, hp)?.ell)
}

/// Same quantity via the determinant lemma and a `k × k` factor, whatever `k`.
pub fn log_marginal_likelihood_woodbury(data: &Dataset, hp: &HyperParams) -> Result<f64> {
    Ok(Evidence::with_route(data, hp, Route::Woodbury)?.ell)
}

/// Same quantity by materializing `C` and factoring it. Test oracle.
pub fn log_marginal_likelihood_dense(data: &Dataset, hp: &HyperParams) -> Result<f64> {
    hp.check_against(data)?;
    let n = data.n();
    let mut c = Array2::<f64>::eye(n) * hp.sigma2;
    for j in hp.support() {
        let xj = data.column(j);
        let g = hp.gamma[j];
        for r in 0..n {
            let v = g * xj[r];
            let mut row = c.slice_mut(s![r, ..]);
            row.scaled_add(v, &xj);
        }
    }
    let chol = Cholesky::factor(c.view())?;
    let u = chol.solve(data.y());
    Ok(-0.5 * (chol.log_det() + data.y().dot(&u)))
}

/// Posterior mean and covariance factor `V = (X_a'X_a + σ²Γ_a⁻¹)⁻¹` on the support.
pub fn posterior_moments(data: &Dataset, hp: &HyperParams) -> Result<PosteriorMoments> {
    hp.check_against(data)?;
    let support = hp.support();
    if support.is_empty() {
        return Ok(PosteriorMoments {
            support,
            mu: Array1::zeros(0),
            v: Array2::zeros((0, 0)),
        });
    }
    let xa = data.x().select(Axis(1), &support);
    let mut a = xa.t().dot(&xa);
    for (i, &j) in support.iter().enumerate() {
        a[[i, i]] += hp.sigma2 / hp.gamma[j];
    }
    let chol = Cholesky::factor(a.view())?;
    let b = data.xty().select(Axis(0), &support);
    let mu = chol.solve(b.view());
    let v = chol.inverse();
    Ok(PosteriorMoments { support, mu, v })
}

/// Posterior mean of `β` as a length-`p` vector, zero off the support.
pub fn beta_from_gamma(data: &Dataset, hp: &HyperParams) -> Result<Array1<f64>> {
    Ok(Evidence::compute(data, hp)?.beta(data.p()))
}

/// Analytic `∂ℓ/∂γ_j` at `hp`.
pub fn likelihood_gradient_coordinate(data: &Dataset, hp: &HyperParams, j: usize) -> Result<f64> {
    if j >= data.p() {
        return Err(SblError::InvalidInput(format!(
            "coordinate {j} out of range for p = {}",
            data.p()
        )));
    }
    let ev = Evidence::compute(data, hp)?;
    let (s, q) = ev.loo_stats(data, j);
    Ok(coordinate_gradient(s, q, hp.gamma[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset::new(Array2::eye(2), array![3.0, 0.5]).unwrap()
    }

    #[test]
    fn zero_gamma_likelihood_is_identity_covariance() {
        let hp = HyperParams::new(array![0.0, 0.0], 1.0).unwrap();
        let ell = log_marginal_likelihood(&toy(), &hp).unwrap();
        assert!((ell - -4.625).abs() < 1e-14);
        assert!((log_marginal_likelihood_dense(&toy(), &hp).unwrap() - -4.625).abs() < 1e-14);
    }

    #[test]
    fn single_active_column_two_by_two() {
        // C = diag(9, 1)
        let hp = HyperParams::new(array![8.0, 0.0], 1.0).unwrap();
        let want = -0.5 * 9f64.ln() - 0.5 * (1.0 + 0.25);
        for ell in [
            log_marginal_likelihood(&toy(), &hp).unwrap(),
            log_marginal_likelihood_woodbury(&toy(), &hp).unwrap(),
            log_marginal_likelihood_dense(&toy(), &hp).unwrap(),
            Evidence::with_route(&toy(), &hp, Route::Dense).unwrap().ell,
        ] {
            assert!((ell - want).abs() < 1e-13, "{ell} vs {want}");
        }
        assert!((want - -1.72361).abs() < 1e-5);
    }

    #[test]
    fn scalar_posterior_mean() {
        let hp = HyperParams::new(array![8.0, 0.0], 1.0).unwrap();
        let pm = posterior_moments(&toy(), &hp).unwrap();
        assert_eq!(pm.support, vec![0]);
        assert!((pm.mu[0] - 8.0 / 3.0).abs() < 1e-14);
        assert!((pm.v[[0, 0]] - 1.0 / (1.0 + 1.0 / 8.0)).abs() < 1e-14);
        let beta = beta_from_gamma(&toy(), &hp).unwrap();
        assert!((beta[0] - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn empty_support_gives_zero_beta() {
        let hp = HyperParams::new(array![0.0, 0.0], 2.0).unwrap();
        let pm = posterior_moments(&toy(), &hp).unwrap();
        assert!(pm.support.is_empty());
        assert_eq!(beta_from_gamma(&toy(), &hp).unwrap(), array![0.0, 0.0]);
    }

    #[test]
    fn tiny_gamma_is_off_support() {
        let hp = HyperParams::new(array![1e-13, 4.0], 1.0).unwrap();
        assert_eq!(hp.support(), vec![1]);
    }

    #[test]
    fn gradient_at_zero_gamma() {
        let hp = HyperParams::new(array![0.0, 0.0], 1.0).unwrap();
        let g = likelihood_gradient_coordinate(&toy(), &hp, 0).unwrap();
        assert!((g - 4.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_orthogonal_optimum() {
        let hp = HyperParams::new(array![8.0, 0.0], 1.0).unwrap();
        let g = likelihood_gradient_coordinate(&toy(), &hp, 0).unwrap();
        assert!(g.abs() < 1e-14);
    }

    #[test]
    fn gradient_negative_for_zero_response() {
        let data = Dataset::new(Array2::eye(2), array![0.0, 0.0]).unwrap();
        let hp = HyperParams::new(array![2.0, 0.5], 1.0).unwrap();
        for j in 0..2 {
            let g = likelihood_gradient_coordinate(&data, &hp, j).unwrap();
            let gj = hp.gamma[j];
            // ℓ = -½ log(1 + γ S) + const when y = 0, so ∂ℓ/∂γ = -½ S / (1 + γ S)
            let want = -0.5 / (1.0 + gj);
            assert!(g < 0.0);
            assert!((g - want).abs() < 1e-12 * want.abs(), "{g} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            Dataset::new(array![[1.0, 0.0], [2.0, 0.0]], array![1.0, 2.0]),
            Err(SblError::ZeroColumn(1))
        ));
        assert!(matches!(
            Dataset::new(Array2::eye(2), array![1.0]),
            Err(SblError::DimensionMismatch { .. })
        ));
        assert!(Dataset::new(Array2::eye(2), array![f64::NAN, 1.0]).is_err());
        assert!(HyperParams::new(array![1.0, -1.0], 1.0).is_err());
        assert!(HyperParams::new(array![1.0, 1.0], 0.0).is_err());
        let hp = HyperParams::new(array![1.0, f64::INFINITY], 1.0);
        assert!(matches!(hp, Err(SblError::InvalidInput(_))));
    }
}
