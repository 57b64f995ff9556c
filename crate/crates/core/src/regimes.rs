//! Decision rules mapping covariates to an arm.
//!
//! Learned rules reduce to the sign of a linear contrast in the covariates:
//! Q-learning takes it from an outcome model on `(1, X, A, A·X)` with
//! `A ∈ {0, 1}`; D-learning estimates it directly from modified covariates
//! `Ã·(1, X)/2` with `Ã ∈ {-1, +1}` and inverse-propensity weights. With
//! [`Prefer::Smaller`] the treated arm is chosen iff the contrast is negative.
//! A contrast of exactly zero always assigns the control arm.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Arm, Dataset, Subject};
use crate::glm::{cv_select, GlmError, GlmFamily, DEFAULT_ALPHA, DEFAULT_FOLDS};
use crate::propensity::PropensityModel;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("subject `{0}` has a missing covariate")]
    MissingCovariate(String),

    #[error("the observed-treatment rule needs a subject, not a bare covariate vector")]
    ObservedNeedsSubject,

    #[error("rule expects {expected} covariates, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("training data must be complete")]
    IncompleteTraining,

    #[error(transparent)]
    Glm(#[from] GlmError),
}

/// Which outcome direction is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prefer {
    #[default]
    Smaller,
    Larger,
}

impl Prefer {
    pub fn negated(self) -> Prefer {
        match self {
            Prefer::Smaller => Prefer::Larger,
            Prefer::Larger => Prefer::Smaller,
        }
    }

    /// Arm implied by a treated-minus-control contrast.
    pub fn arm_for(self, contrast: f64) -> Arm {
        let treat = match self {
            Prefer::Smaller => contrast < 0.0,
            Prefer::Larger => contrast > 0.0,
        };
        if treat {
            Arm::Treated
        } else {
            Arm::Control
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    Constant {
        arm: Arm,
    },
    Observed,
    /// Outcome-model coefficients over `(1, x₁..x_p, a, a·x₁..a·x_p)`.
    QLearned {
        eta: Vec<f64>,
    },
    /// Contrast coefficients over `(1, x₁..x_p)`.
    DLearned {
        beta: Vec<f64>,
    },
    /// A fixed contrast over `(1, x₁..x_p)`, e.g. a known optimal rule.
    Linear {
        contrast: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub alpha: f64,
    pub lambda: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub family: GlmFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    #[serde(flatten)]
    pub kind: RuleKind,
    pub prefer: Prefer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

fn dot_with_intercept(coef: &[f64], x: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
}

impl DecisionRule {
    pub fn constant(arm: Arm) -> Self {
        DecisionRule { kind: RuleKind::Constant { arm }, prefer: Prefer::Smaller, training: None }
    }

    pub fn observed() -> Self {
        DecisionRule { kind: RuleKind::Observed, prefer: Prefer::Smaller, training: None }
    }

    pub fn linear(contrast: Vec<f64>, prefer: Prefer) -> Self {
        DecisionRule { kind: RuleKind::Linear { contrast }, prefer, training: None }
    }

    pub fn q_learned(eta: Vec<f64>, prefer: Prefer) -> Self {
        DecisionRule { kind: RuleKind::QLearned { eta }, prefer, training: None }
    }

    pub fn d_learned(beta: Vec<f64>, prefer: Prefer) -> Self {
        DecisionRule { kind: RuleKind::DLearned { beta }, prefer, training: None }
    }

    pub fn with_prefer(mut self, prefer: Prefer) -> Self {
        self.prefer = prefer;
        self
    }

    /// Number of covariates the rule reads, if it reads any.
    pub fn width(&self) -> Option<usize> {
        match &self.kind {
            RuleKind::Constant { .. } | RuleKind::Observed => None,
            RuleKind::QLearned { eta } => Some((eta.len() - 2) / 2),
            RuleKind::DLearned { beta: c } | RuleKind::Linear { contrast: c } => Some(c.len() - 1),
        }
    }

    /// Treated-minus-control contrast at `x`, for rules that have one.
    pub fn contrast(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            RuleKind::Constant { .. } | RuleKind::Observed => None,
            RuleKind::QLearned { eta } => {
                let p = (eta.len() - 2) / 2;
                Some(eta[p + 1] + eta[p + 2..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>())
            }
            RuleKind::DLearned { beta: c } | RuleKind::Linear { contrast: c } => Some(dot_with_intercept(c, x)),
        }
    }

    /// Decision for a bare covariate vector.
    pub fn decide(&self, x: &[f64]) -> Result<Arm, RuleError> {
        match &self.kind {
            RuleKind::Constant { arm } => Ok(*arm),
            RuleKind::Observed => Err(RuleError::ObservedNeedsSubject),
            _ => {
                let expected = self.width().expect("learned rules have a width");
                if x.len() != expected {
                    return Err(RuleError::WidthMismatch { expected, got: x.len() });
                }
                Ok(self.prefer.arm_for(self.contrast(x).expect("learned rules have a contrast")))
            }
        }
    }

    pub fn evaluate(&self, subject: &Subject) -> Result<Arm, RuleError> {
        match &self.kind {
            RuleKind::Constant { arm } => Ok(*arm),
            RuleKind::Observed => Ok(subject.arm),
            _ => {
                let x = subject
                    .observed_covariates()
                    .ok_or_else(|| RuleError::MissingCovariate(subject.id.clone()))?;
                self.decide(&x)
            }
        }
    }

    pub fn evaluate_all(&self, data: &Dataset) -> Result<Vec<Arm>, RuleError> {
        data.subjects().iter().map(|s| self.evaluate(s)).collect()
    }
}

/// Fraction of subjects on which `rule` and `oracle` disagree.
pub fn misclassification(rule: &DecisionRule, oracle: &DecisionRule, data: &Dataset) -> Result<f64, RuleError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for s in data.subjects() {
        if rule.evaluate(s)? != oracle.evaluate(s)? {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Like [`misclassification`], but the oracle reads its covariates from a
/// parallel reference dataset (e.g. the fully observed version of an imputed set).
pub fn misclassification_against(
    rule: &DecisionRule,
    data: &Dataset,
    oracle: &DecisionRule,
    reference: &Dataset,
) -> Result<f64, RuleError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for (s, r) in data.subjects().iter().zip(reference.subjects()) {
        if rule.evaluate(s)? != oracle.evaluate(r)? {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

// ── Learners ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub n_folds: usize,
    pub seed: u64,
    /// Loss family; `None` picks binomial for Q-learning on 0/1 outcomes and
    /// gaussian otherwise, and gaussian for D-learning.
    pub family: Option<GlmFamily>,
    pub prefer: Prefer,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig { alpha: DEFAULT_ALPHA, n_folds: DEFAULT_FOLDS, seed: 0, family: None, prefer: Prefer::Smaller }
    }
}

fn complete_rows(train: &Dataset) -> Result<Vec<Vec<f64>>, RuleError> {
    train.covariate_rows().ok_or(RuleError::IncompleteTraining)
}

fn is_binary(y: &[f64]) -> bool {
    y.iter().all(|v| *v == 0.0 || *v == 1.0)
}

/// Q-learning: penalized regression of `Y` on `(X, A, A·X)`.
pub fn train_q(train: &Dataset, cfg: &LearnerConfig) -> Result<DecisionRule, RuleError> {
    let rows = complete_rows(train)?;
    let p = train.p();
    let y = train.outcomes();
    let design = DMatrix::from_fn(train.len(), 2 * p + 1, |i, j| {
        let a = train.subjects()[i].arm.indicator();
        if j < p {
            rows[i][j]
        } else if j == p {
            a
        } else {
            a * rows[i][j - p - 1]
        }
    });
    let family = cfg.family.unwrap_or(if is_binary(&y) { GlmFamily::Binomial } else { GlmFamily::Gaussian });
    let cv = cv_select(&design, &y, None, family, cfg.alpha, cfg.n_folds, None, cfg.seed)?;
    let mut eta = Vec::with_capacity(2 * p + 2);
    eta.push(cv.fit.intercept);
    eta.extend_from_slice(&cv.fit.coefficients);
    Ok(DecisionRule {
        kind: RuleKind::QLearned { eta },
        prefer: cfg.prefer,
        training: Some(TrainingMeta {
            alpha: cfg.alpha,
            lambda: cv.lambda_star,
            n_folds: cfg.n_folds,
            seed: cfg.seed,
            family,
        }),
    })
}

/// D-learning: weighted penalized regression of `Y` on `Ã·(1, X)/2` with
/// weights `1 / π̂(a | x)`.
pub fn train_d(train: &Dataset, propensity: &PropensityModel, cfg: &LearnerConfig) -> Result<DecisionRule, RuleError> {
    let rows = complete_rows(train)?;
    let p = train.p();
    let y = train.outcomes();
    let subjects = train.subjects();
    let design = DMatrix::from_fn(train.len(), p + 1, |i, j| {
        let half = 0.5 * subjects[i].arm.signed();
        if j == 0 {
            half
        } else {
            half * rows[i][j - 1]
        }
    });
    let weights: Vec<f64> = subjects.iter().zip(&rows).map(|(s, x)| 1.0 / propensity.pi(s.arm, x)).collect();
    let family = cfg.family.unwrap_or(GlmFamily::Gaussian);
    let cv = cv_select(&design, &y, Some(&weights), family, cfg.alpha, cfg.n_folds, None, cfg.seed)?;
    Ok(DecisionRule {
        kind: RuleKind::DLearned { beta: cv.fit.coefficients.clone() },
        prefer: cfg.prefer,
        training: Some(TrainingMeta {
            alpha: cfg.alpha,
            lambda: cv.lambda_star,
            n_folds: cfg.n_folds,
            seed: cfg.seed,
            family,
        }),
    })
}
