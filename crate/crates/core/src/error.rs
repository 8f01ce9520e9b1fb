use thiserror::Error;

pub type Result<T, E = SblError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SblError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch for {what}: {left} vs {right}")]
    DimensionMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    /// Cholesky factorization hit a non-positive or non-finite pivot.
    #[error("matrix is not numerically positive definite (pivot {pivot})")]
    Conditioning { pivot: usize },

    #[error("EM iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<SblError>,
    },

    #[error("columns {j} and {k} are not orthogonal (|cosine| = {cosine:.3e})")]
    NotOrthogonal { j: usize, k: usize, cosine: f64 },

    #[error("column {0} of the design matrix is all zero")]
    ZeroColumn(usize),

    #[error("coordinate descent did not converge at lambda = {lambda:.6e} after {sweeps} sweeps")]
    LassoNonConvergence { lambda: f64, sweeps: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SblError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            SblError::InvalidInput(_) => "invalid-input",
            SblError::InvalidConfig(_) => "invalid-config",
            SblError::DimensionMismatch { .. } => "dimension-mismatch",
            SblError::Conditioning { .. } => "conditioning",
            SblError::AtIteration { source, .. } => source.kind(),
            SblError::NotOrthogonal { .. } => "not-orthogonal",
            SblError::ZeroColumn(_) => "zero-column",
            SblError::LassoNonConvergence { .. } => "lasso-non-convergence",
            SblError::Parse { .. } => "parse",
            SblError::Io(_) => "io",
            SblError::Json(_) => "json",
            SblError::Csv(_) => "csv",
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ SblError::AtIteration { .. } => e,
            e => SblError::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}
