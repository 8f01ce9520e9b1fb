// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod em;
pub mod error;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod threshold;

pub use em::{em_fit, em_step, orthogonal_closed_form, stationarity_diagnostic, EmConfig, SblFit};
pub use error::{Result, SblError};
pub use lasso::{cd_fit_path, cv_select, cv_select_with_folds, soft_threshold, LassoConfig, LassoFit, LassoPath};
pub use model::{
    beta_from_gamma, likelihood_gradient_coordinate, log_marginal_likelihood, posterior_moments, Dataset, GroundTruth,
    HyperParams, PosteriorMoments,
};
pub use threshold::{
    bic_score, estimate_rho_hat, hard_threshold, select_threshold, BicResidual, ThresholdConfig, ThresholdedFit,
};
