//! Synthetic experiments: data generation, selection metrics, the
//! replication runner and Monte-Carlo checks of the orthogonal-design
//! theory.

mod design;
mod metrics;
mod output;
mod rng;
mod runner;
mod verify;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

pub use design::{equicorrelated, generate_design, generate_truth_and_response, orthogonal, DesignSource};
pub use metrics::{compute_metrics, summarize, MethodSummary, MetricValues, MetricsRecord};
pub use output::{write_long_csv, write_metrics_csv, LongRow, METRICS_HEADER};
pub use rng::{stream_rng, Stream};
pub use runner::{run_scenario, run_sweep, MethodSettings, ScenarioResult, SweepCell, SweepConfig, SweepResult};
pub use verify::{
    bound_probability_floor, chi2_one_mass_below_one, verify_error_bound_and_signs, verify_null_retention, BoundReport,
    NullRetentionReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    EquicorrelatedGaussian,
    ExactOrthogonal,
    ExternalCsv,
}

/// Noise variance used when fitting SBL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma2Mode {
    #[default]
    Estimated,
    /// Fixed at the true `σ⋆²`.
    Known,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sbl,
    SblThresholded,
    Lasso,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sbl, Method::SblThresholded, Method::Lasso];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sbl => "sbl",
            Method::SblThresholded => "sbl-thresholded",
            Method::Lasso => "lasso",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SblError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SblError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    /// Equicorrelation of the design rows.
    pub rho: f64,
    /// Number of nonzero coefficients.
    pub s: usize,
    /// Nonzero magnitudes are drawn from `U(a, a+1)`.
    pub a: f64,
    pub sigma_star: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub design_kind: DesignKind,
    /// Design file for `external-csv`.
    pub x_path: Option<PathBuf>,
    /// Rademacher signs on the nonzeros instead of all positive.
    pub random_signs: bool,
    pub sigma2_mode: Sigma2Mode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 500,
            rho: 0.0,
            s: 3,
            a: 0.0,
            sigma_star: 1.0,
            n_reps: 30,
            seed: 0,
            design_kind: DesignKind::EquicorrelatedGaussian,
            x_path: None,
            random_signs: false,
            sigma2_mode: Sigma2Mode::Estimated,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SblError::InvalidConfig(m));
        if self.n == 0 || self.p == 0 {
            return bad(format!("n and p must be positive, got n = {}, p = {}", self.n, self.p));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return bad(format!("a must be finite and non-negative, got {}", self.a));
        }
        if !(self.sigma_star > 0.0) || !self.sigma_star.is_finite() {
            return bad(format!("sigma_star must be positive, got {}", self.sigma_star));
        }
        if self.n_reps == 0 {
            return bad("n_reps must be positive".into());
        }
        if self.design_kind == DesignKind::ExactOrthogonal && self.p > self.n {
            return bad(format!(
                "exact-orthogonal design needs p <= n, got p = {}, n = {}",
                self.p, self.n
            ));
        }
        Ok(())
    }

    pub fn sigma_star2(&self) -> f64 {
        self.sigma_star * self.sigma_star
    }
}
