//! JSON run configuration. Every command-line flag has a key here; a flag
//! given on the command line wins over the file.

use std::path::{Path, PathBuf};

use sbl_core::sim::{Method, ScenarioConfig, SweepConfig};
use sbl_core::threshold::{default_c_grid, DEFAULT_MAX_PAIRS};
use sbl_core::{BicResidual, EmConfig, LassoConfig, SblError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub fixed_sigma2: Option<f64>,
    pub c_grid: Option<Vec<f64>>,
    pub method: Option<Vec<Method>>,
    pub em: EmConfig,
    pub threshold: ThresholdSection,
    pub lasso: LassoConfig,
    pub scenario: ScenarioConfig,
    /// When present, `simulate` runs the grid instead of the single scenario.
    pub sweep: Option<SweepSection>,
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub c_grid: Vec<f64>,
    pub bic: BicResidual,
    /// Column pairs examined for ρ̂ before switching to a random subsample.
    pub rho_max_pairs: usize,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            c_grid: default_c_grid(),
            bic: BicResidual::Squared,
            rho_max_pairs: DEFAULT_MAX_PAIRS,
        }
    }
}

/// Grid over `rho`, `s`, `a` around `scenario`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub rho: Vec<f64>,
    pub s: Vec<usize>,
    pub a: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            rho: d.rho,
            s: d.s,
            a: d.a,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub null_retention_reps: usize,
    pub bound_reps: usize,
    pub c0: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            null_retention_reps: 2000,
            bound_reps: 500,
            c0: 3.0,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, SblError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
