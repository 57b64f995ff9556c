//! Arm-probability models `π(a | x)`.
//!
//! A [`PropensityModel`] is either known by design (randomized assignment,
//! no estimated parameters) or a logistic regression of the arm on all
//! covariates, carrying the parameter covariance `Σ̂ₙ` from the training
//! fit. Probabilities are clipped into `[clip, 1 - clip]` before use as
//! inverse weights.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Arm, Dataset};
use crate::glm::{fit_mle_logistic, GlmError, MleFit};
use crate::stats::expit;

pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("propensity models need complete covariates")]
    IncompleteData,

    #[error("training data contains only arm {0}")]
    OneArm(u8),

    #[error("known arm-1 probability must lie in (0, 1), got {0}")]
    BadProbability(f64),

    #[error("clip must lie in [0, 0.5), got {0}")]
    BadClip(f64),

    #[error("known propensity has no estimated parameters and no gradient")]
    KnownModelHasNoPhi,

    #[error("expected {expected} parameters, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Glm(#[from] GlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PropensityKind {
    Known {
        pi1: f64,
    },
    Logistic {
        /// Intercept first, then one slope per covariate.
        theta: Vec<f64>,
        #[serde(with = "crate::matrix_serde")]
        sigma: DMatrix<f64>,
        n_fit: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    #[serde(flatten)]
    pub kind: PropensityKind,
    pub clip: f64,
}

impl PropensityModel {
    pub fn known(pi1: f64) -> Result<Self, PropensityError> {
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(PropensityError::BadProbability(pi1));
        }
        Ok(PropensityModel { kind: PropensityKind::Known { pi1 }, clip: DEFAULT_CLIP })
    }

    pub fn logistic(theta: Vec<f64>, sigma: DMatrix<f64>, n_fit: usize) -> Result<Self, PropensityError> {
        let k = theta.len();
        if sigma.shape() != (k, k) {
            return Err(PropensityError::DimensionMismatch { expected: k, got: sigma.nrows() });
        }
        Ok(PropensityModel { kind: PropensityKind::Logistic { theta, sigma, n_fit }, clip: DEFAULT_CLIP })
    }

    pub fn from_mle(fit: &MleFit, n_fit: usize) -> Self {
        PropensityModel {
            kind: PropensityKind::Logistic { theta: fit.theta.clone(), sigma: fit.covariance.clone(), n_fit },
            clip: DEFAULT_CLIP,
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Result<Self, PropensityError> {
        if !(0.0..0.5).contains(&clip) {
            return Err(PropensityError::BadClip(clip));
        }
        self.clip = clip;
        Ok(self)
    }

    /// Replaces `Σ̂ₙ`, e.g. with a covariance pooled across imputations.
    pub fn with_sigma(mut self, new_sigma: DMatrix<f64>) -> Result<Self, PropensityError> {
        match &mut self.kind {
            PropensityKind::Known { .. } => Err(PropensityError::KnownModelHasNoPhi),
            PropensityKind::Logistic { theta, sigma, .. } => {
                if new_sigma.shape() != (theta.len(), theta.len()) {
                    return Err(PropensityError::DimensionMismatch { expected: theta.len(), got: new_sigma.nrows() });
                }
                *sigma = new_sigma;
                Ok(self)
            }
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self.kind, PropensityKind::Known { .. })
    }

    /// Parameter covariance; `None` for a known model (whose `Σ` is zero).
    pub fn sigma(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            PropensityKind::Known { .. } => None,
            PropensityKind::Logistic { sigma, .. } => Some(sigma),
        }
    }

    pub fn theta(&self) -> Option<&[f64]> {
        match &self.kind {
            PropensityKind::Known { .. } => None,
            PropensityKind::Logistic { theta, .. } => Some(theta),
        }
    }

    fn linear_score(theta: &[f64], x: &[f64]) -> f64 {
        theta[0] + theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>()
    }

    /// `π(a | x)` before clipping.
    pub fn pi_unclipped(&self, arm: Arm, x: &[f64]) -> f64 {
        let p1 = match &self.kind {
            PropensityKind::Known { pi1 } => *pi1,
            PropensityKind::Logistic { theta, .. } => expit(Self::linear_score(theta, x)),
        };
        match arm {
            Arm::Treated => p1,
            Arm::Control => 1.0 - p1,
        }
    }

    /// `π(a | x)` clipped into `[clip, 1 - clip]`.
    pub fn pi(&self, arm: Arm, x: &[f64]) -> f64 {
        self.pi_unclipped(arm, x).clamp(self.clip, 1.0 - self.clip)
    }

    /// Gradient of `π(a | x, θ)` with respect to `θ`, on the design vector `(1, x)`:
    /// `(2a - 1) (1, x) e^{s} / (1 + e^{s})²` with `s = θᵀ(1, x)`.
    pub fn phi(&self, arm: Arm, x: &[f64]) -> Result<Vec<f64>, PropensityError> {
        let theta = match &self.kind {
            PropensityKind::Known { .. } => return Err(PropensityError::KnownModelHasNoPhi),
            PropensityKind::Logistic { theta, .. } => theta,
        };
        let p = expit(Self::linear_score(theta, x));
        let scale = arm.signed() * p * (1.0 - p);
        Ok(std::iter::once(scale).chain(x.iter().map(|v| v * scale)).collect())
    }
}

/// Logistic MLE of the arm on `(1, X)` over a complete training set.
pub fn fit_propensity(train: &Dataset) -> Result<PropensityModel, PropensityError> {
    Ok(fit_propensity_mle(train)?.0)
}

/// As [`fit_propensity`], also returning the raw MLE fit.
pub fn fit_propensity_mle(train: &Dataset) -> Result<(PropensityModel, MleFit), PropensityError> {
    let x = train.covariate_matrix().ok_or(PropensityError::IncompleteData)?;
    let a: Vec<f64> = train.subjects().iter().map(|s| s.arm.indicator()).collect();
    if let Some(first) = train.subjects().first() {
        if train.subjects().iter().all(|s| s.arm == first.arm) {
            return Err(PropensityError::OneArm(first.arm.code()));
        }
    }
    let fit = fit_mle_logistic(&x, &a)?;
    Ok((PropensityModel::from_mle(&fit, train.len()), fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn logistic(theta: Vec<f64>) -> PropensityModel {
        let k = theta.len();
        PropensityModel::logistic(theta, DMatrix::zeros(k, k), 10).unwrap()
    }

    #[test]
    fn known_half() {
        let m = PropensityModel::known(0.5).unwrap();
        for x in [[0.0, 1.0], [5.0, -3.0]] {
            assert_eq!(m.pi(Arm::Treated, &x), 0.5);
            assert_eq!(m.pi(Arm::Control, &x), 0.5);
        }
        assert!(m.sigma().is_none());
        assert!(matches!(m.phi(Arm::Treated, &[0.0]), Err(PropensityError::KnownModelHasNoPhi)));
        assert!(PropensityModel::known(1.0).is_err());
    }

    #[test]
    fn zero_theta_is_balanced() {
        let m = logistic(vec![0.0; 3]);
        assert_eq!(m.pi(Arm::Treated, &[1.0, -2.0]), 0.5);
        assert_eq!(m.pi(Arm::Control, &[1.0, -2.0]), 0.5);
    }

    #[test]
    fn clipping_boundary() {
        let m = logistic(vec![0.0, 10.0, 0.0]);
        assert_eq!(m.pi(Arm::Treated, &[1.0, 0.0]), 0.99);
        assert_eq!(m.pi(Arm::Control, &[1.0, 0.0]), 0.01);
        assert!(m.pi_unclipped(Arm::Treated, &[1.0, 0.0]) > 0.9999);
    }

    #[test]
    fn phi_at_zero_theta() {
        let m = logistic(vec![0.0; 3]);
        assert_eq!(m.phi(Arm::Treated, &[0.0, 0.0]).unwrap(), vec![0.25, 0.0, 0.0]);
        assert_eq!(m.phi(Arm::Control, &[2.0, -1.0]).unwrap(), vec![-0.25, -0.5, 0.25]);
    }

    #[test]
    fn json_shape() {
        let m = logistic(vec![0.1, 0.2]);
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["kind"], "logistic");
        assert_eq!(v["clip"], 0.01);
        assert_eq!(v["n_fit"], 10);
        assert_eq!(v["sigma"][1][1], 0.0);
        let back: PropensityModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        let k = serde_json::to_value(PropensityModel::known(0.3).unwrap()).unwrap();
        assert_eq!(k["kind"], "known");
        assert_eq!(k["pi1"], 0.3);
    }

    #[test]
    fn fit_rejects_one_arm_and_missing() {
        let subjects: Vec<Subject> =
            (0..6).map(|i| Subject::complete(format!("{i}"), &[i as f64], Arm::Treated, 0.0)).collect();
        let d = Dataset::new(subjects, 1).unwrap();
        assert!(matches!(fit_propensity(&d), Err(PropensityError::OneArm(1))));
        let mut s = Subject::complete("m", &[0.0], Arm::Control, 0.0);
        s.covariates[0] = None;
        let d = Dataset::new(vec![s], 1).unwrap();
        assert!(matches!(fit_propensity(&d), Err(PropensityError::IncompleteData)));
    }
}
