use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::rng::{stream_rng, Stream};
use super::{DesignKind, ScenarioConfig};
use crate::error::{Result, SblError};
use crate::io::load_matrix;
use crate::model::GroundTruth;

/// Design draw for one replication.
///
/// External designs are read from disk on every call; use
/// [`DesignSource::resolve`] to load them once for many replications.
pub fn generate_design(cfg: &ScenarioConfig, rep: u64) -> Result<Array2<f64>> {
    DesignSource::resolve(cfg)?.draw(cfg, rep)
}

#[derive(Debug, Clone)]
pub enum DesignSource {
    Random,
    Fixed(Array2<f64>),
}

impl DesignSource {
    pub fn resolve(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.design_kind {
            DesignKind::ExternalCsv => {
                let path = cfg
                    .x_path
                    .as_ref()
                    .ok_or_else(|| SblError::InvalidConfig("external-csv design needs x_path".into()))?;
                let x = load_matrix(path)?;
                if x.dim() != (cfg.n, cfg.p) {
                    return Err(SblError::InvalidConfig(format!(
                        "external design is {} x {}, scenario says {} x {}",
                        x.nrows(),
                        x.ncols(),
                        cfg.n,
                        cfg.p
                    )));
                }
                Ok(Self::Fixed(x))
            }
            _ => Ok(Self::Random),
        }
    }

    pub fn draw(&self, cfg: &ScenarioConfig, rep: u64) -> Result<Array2<f64>> {
        let mut rng = stream_rng(cfg.seed, rep, Stream::Design);
        match (self, cfg.design_kind) {
            (Self::Fixed(x), _) => Ok(x.clone()),
            (Self::Random, DesignKind::EquicorrelatedGaussian) => Ok(equicorrelated(cfg.n, cfg.p, cfg.rho, &mut rng)),
            (Self::Random, DesignKind::ExactOrthogonal) => orthogonal(cfg.n, cfg.p, &mut rng),
            (Self::Random, DesignKind::ExternalCsv) => {
                Err(SblError::InvalidConfig("external design was not loaded".into()))
            }
        }
    }
}

/// Rows `√(1−ρ) z + √ρ g 1`, `z ~ N(0, I_p)`, `g ~ N(0, 1)`.
pub fn equicorrelated<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Array2<f64> {
    let a = (1.0 - rho).sqrt();
    let b = rho.sqrt();
    let mut x = Array2::zeros((n, p));
    for mut row in x.axis_iter_mut(Axis(0)) {
        let g: f64 = rng.sample(StandardNormal);
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = a * z + b * g;
        }
    }
    x
}

/// Orthonormalized Gaussian columns scaled so that `X'X = n I`.
pub fn orthogonal<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Array2<f64>> {
    if p > n {
        return Err(SblError::InvalidConfig(format!(
            "exact-orthogonal design needs p <= n, got p = {p}, n = {n}"
        )));
    }
    // columns stored as rows while orthogonalizing
    let mut q = Array2::<f64>::zeros((p, n));
    q.mapv_inplace(|_| rng.sample(StandardNormal));
    for j in 0..p {
        // two Gram-Schmidt passes keep the result orthogonal to rounding
        for _ in 0..2 {
            for k in 0..j {
                let (done, mut rest) = q.view_mut().split_at(Axis(0), j);
                let qk = done.row(k);
                let mut qj = rest.row_mut(0);
                let d = qj.dot(&qk);
                qj.scaled_add(-d, &qk);
            }
        }
        let mut qj = q.row_mut(j);
        let norm = qj.dot(&qj).sqrt();
        qj.mapv_inplace(|v| v / norm);
    }
    let scale = (n as f64).sqrt();
    Ok(q.t().mapv(|v| v * scale))
}

/// Seeded support, magnitudes `U(a, a+1)` and Gaussian noise.
pub fn generate_truth_and_response(
    cfg: &ScenarioConfig,
    x: &Array2<f64>,
    rep: u64,
) -> Result<(GroundTruth, Array1<f64>)> {
    cfg.validate()?;
    if x.ncols() != cfg.p {
        return Err(SblError::DimensionMismatch {
            what: "design columns vs scenario p",
            left: x.ncols(),
            right: cfg.p,
        });
    }
    let mut support =
        rand::seq::index::sample(&mut stream_rng(cfg.seed, rep, Stream::Support), cfg.p, cfg.s).into_vec();
    support.sort_unstable();
    let mut mag = stream_rng(cfg.seed, rep, Stream::Magnitude);
    let mut sign = stream_rng(cfg.seed, rep, Stream::Sign);
    let mut beta = Array1::zeros(cfg.p);
    for &j in &support {
        let m = cfg.a + mag.random::<f64>();
        let flip = cfg.random_signs && sign.random::<bool>();
        beta[j] = if flip { -m } else { m };
    }
    let mut noise = stream_rng(cfg.seed, rep, Stream::Noise);
    let mut y = x.dot(&beta);
    for v in y.iter_mut() {
        let e: f64 = noise.sample(StandardNormal);
        *v += cfg.sigma_star * e;
    }
    let truth = GroundTruth::new(beta, cfg.sigma_star * cfg.sigma_star);
    Ok((truth, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_gram_is_scaled_identity() {
        let mut rng = stream_rng(5, 0, Stream::Design);
        let x = orthogonal(40, 40, &mut rng).unwrap();
        let g = x.t().dot(&x);
        for i in 0..40 {
            for j in 0..40 {
                let want = if i == j { 40.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-10);
            }
        }
        assert!(orthogonal(3, 4, &mut rng).is_err());
    }
}
