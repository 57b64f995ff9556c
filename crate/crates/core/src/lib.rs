//! Value estimation and comparison for individualized treatment rules.
//!
//! Rules are learned on a training set and evaluated on an independent test
//! set with an inverse-propensity-weighted (Hajek) value estimate. Variances
//! come from the influence function of that estimate, with an extra term for
//! an estimated propensity model, and two rules are compared with a normal
//! t-test on the paired difference. Missing covariates are handled by
//! multiple imputation with Rubin-style pooling.
//!
//! Module map:
//! - [`data`]: cohorts, splits, CSV I/O
//! - [`glm`]: elastic-net and logistic MLE solvers
//! - [`propensity`]: arm-probability models and their parameter gradients
//! - [`regimes`]: decision rules (constant, observed, Q-learning, D-learning)
//! - [`value`]: value estimates, variances, paired comparisons
//! - [`mi`]: chained-regression imputation and pooling
//! - [`simulation`]: synthetic study generator and replicate harness
//! - [`analysis`]: end-to-end pipeline for user cohorts
//! - [`report`]: TSV/JSON report rows

pub mod analysis;
pub mod data;
pub mod error;
pub mod glm;
pub(crate) mod matrix_serde;
pub mod mi;
pub mod propensity;
pub mod regimes;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod value;

pub use data::{Arm, Dataset, Split, Subject};
pub use error::Error;
