//! Generalized linear model fitting.
//!
//! - [`fit_elastic_net`] / [`PathSolver`]: cyclic coordinate descent for the
//!   elastic-net penalized gaussian and binomial families, on internally
//!   standardized columns with an unpenalized intercept.
//! - [`cv_select`]: K-fold cross-validated choice of the penalty level.
//! - [`fit_mle_logistic`]: unpenalized Newton–Raphson logistic regression with
//!   the inverse observed information as covariance.

mod cv;
mod elastic_net;
mod logistic;

pub use cv::{cv_select, lambda_path, CvResult, DEFAULT_FOLDS, DEFAULT_PATH_LEN, DEFAULT_PATH_RATIO};
pub use elastic_net::{fit_elastic_net, lambda_max, PathSolver, PenalizedFit, SolverOptions};
pub use logistic::{fit_mle_logistic, MleFit, MAX_THETA_NORM, MAX_CONDITION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Gaussian,
    Binomial,
}

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("design has {rows} rows but {what} has length {len}")]
    DimensionMismatch { rows: usize, what: &'static str, len: usize },

    #[error("need at least 2 observations, got {0}")]
    TooFewRows(usize),

    #[error("binomial response must lie in [0, 1], got {0}")]
    InvalidResponse(f64),

    #[error("weights must be non-negative with positive sum")]
    InvalidWeights,

    #[error("response is constant; binomial likelihood has no finite optimum")]
    DegenerateResponse,

    #[error("alpha must lie in [0, 1] and lambda must be >= 0 (alpha = {alpha}, lambda = {lambda})")]
    InvalidPenalty { alpha: f64, lambda: f64 },

    #[error("n_folds must be in [2, n]; got {n_folds} for n = {n}")]
    InvalidFolds { n_folds: usize, n: usize },

    #[error("separation detected: {0}")]
    Separation(String),

    #[error("observed information matrix is not invertible")]
    SingularInformation,
}

pub(crate) fn check_inputs(
    x: &nalgebra::DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<(), GlmError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(GlmError::DimensionMismatch { rows: n, what: "response", len: y.len() });
    }
    if n < 2 {
        return Err(GlmError::TooFewRows(n));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::NonFiniteInput("design"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::NonFiniteInput("response"));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(GlmError::DimensionMismatch { rows: n, what: "weights", len: w.len() });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::NonFiniteInput("weights"));
        }
        if w.iter().any(|&v| v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(GlmError::InvalidWeights);
        }
    }
    Ok(())
}
