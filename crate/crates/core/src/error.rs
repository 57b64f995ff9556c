use thiserror::Error;

use crate::data::DataError;
use crate::glm::GlmError;
use crate::mi::MiError;
use crate::propensity::PropensityError;
use crate::regimes::RuleError;
use crate::value::ValueError;

/// Any error raised by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(#[from] DataError),

    #[error("glm: {0}")]
    Glm(#[from] GlmError),

    #[error("propensity: {0}")]
    Propensity(#[from] PropensityError),

    #[error("rule: {0}")]
    Rule(#[from] RuleError),

    #[error("value: {0}")]
    Value(#[from] ValueError),

    #[error("imputation: {0}")]
    Mi(#[from] MiError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Failed(String),
}

impl Error {
    /// True for problems with the caller's input or settings rather than a
    /// failure during computation.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Data(_))
    }
}
