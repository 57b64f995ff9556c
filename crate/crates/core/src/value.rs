//! Test-set value estimation and inference for decision rules.
//!
//! For a rule `d` evaluated on `m` test subjects with propensity `π̂` fitted
//! on `n` training subjects:
//!
//! ```text
//! V̂  = Σ yᵢ 1{aᵢ = d(xᵢ)} / π̂ᵢ  /  Σ 1{aᵢ = d(xᵢ)} / π̂ᵢ          (Hajek ratio)
//! Ûᵢ = (yᵢ - V̂) 1{aᵢ = d(xᵢ)} / π̂ᵢ
//! Ŵ  = m⁻¹ Σ φ̂(aᵢ, xᵢ) Ûᵢ / π̂ᵢ
//! σ̂² = m⁻² Σ (Ûᵢ - Ū)² + Ŵᵀ Σ̂ₙ Ŵ
//! ```
//!
//! The second variance term accounts for the estimated propensity parameters
//! and vanishes for a known propensity. Two rules on the same test set are
//! compared through the paired influence values; `t = Δ / sd(Δ)` is referred
//! to the standard normal.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Arm, Dataset};
use crate::propensity::{PropensityError, PropensityModel};
use crate::regimes::{DecisionRule, RuleError};
use crate::stats::two_sided_p;

#[derive(Debug, Error)]
pub enum ValueError {
    #[error("test set is empty")]
    EmptyTestSet,

    #[error("test set has missing covariates; impute first")]
    IncompleteTestSet,

    #[error("training size must be >= 1")]
    BadTrainingSize,

    #[error(
        "no test subject received the arm the rule recommends \
         (rule assigns {assigned_control} to arm 0 and {assigned_treated} to arm 1; \
         observed arms: {observed_control} in arm 0, {observed_treated} in arm 1)"
    )]
    NoConcordantSubjects {
        assigned_control: usize,
        assigned_treated: usize,
        observed_control: usize,
        observed_treated: usize,
    },

    #[error("rules identical on test set: difference and its variance are both zero")]
    DegenerateComparison,

    #[error("influence vector has length {got}, test set has {expected} rows")]
    LengthMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Rule(#[from] RuleError),

    #[error(transparent)]
    Propensity(#[from] PropensityError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarianceOptions {
    /// Drop the propensity-estimation term even when the model is fitted.
    pub ignore_correction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub v_hat: f64,
    pub variance: f64,
    pub m: usize,
    pub n: usize,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub used_correction: bool,
}

impl ValueEstimate {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// JSON view; the per-subject `u` vector is included only on request.
    pub fn to_json(&self, include_u: bool) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("plain struct serializes");
        if !include_u {
            v.as_object_mut().expect("struct is an object").remove("u");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `V̂(d₁) - V̂(d₂)`.
    pub delta: f64,
    /// Estimated variance of `delta`.
    pub variance: f64,
    pub t: f64,
    pub p: f64,
    pub first: ValueEstimate,
    pub second: ValueEstimate,
}

impl Comparison {
    pub fn to_json(&self, include_u: bool) -> serde_json::Value {
        serde_json::json!({
            "delta": self.delta,
            "variance": self.variance,
            "t": self.t,
            "p": self.p,
            "first": self.first.to_json(include_u),
            "second": self.second.to_json(include_u),
        })
    }
}

/// Per-subject pieces shared by every quantity in this module.
struct TestView<'a> {
    data: &'a Dataset,
    rows: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

impl<'a> TestView<'a> {
    fn new(data: &'a Dataset, prop: &PropensityModel) -> Result<Self, ValueError> {
        if data.is_empty() {
            return Err(ValueError::EmptyTestSet);
        }
        let rows = data.covariate_rows().ok_or(ValueError::IncompleteTestSet)?;
        let pi = data.subjects().iter().zip(&rows).map(|(s, x)| prop.pi(s.arm, x)).collect();
        Ok(TestView { data, rows, pi })
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    /// `1{aᵢ = d(xᵢ)} / π̂ᵢ` for every subject.
    fn concordance_weights(&self, rule: &DecisionRule) -> Result<Vec<f64>, ValueError> {
        let mut weights = Vec::with_capacity(self.m());
        let (mut assigned_control, mut assigned_treated) = (0, 0);
        for (s, pi) in self.data.subjects().iter().zip(&self.pi) {
            let rec = rule.evaluate(s)?;
            match rec {
                Arm::Control => assigned_control += 1,
                Arm::Treated => assigned_treated += 1,
            }
            weights.push(if s.arm == rec { 1.0 / pi } else { 0.0 });
        }
        if weights.iter().all(|w| *w == 0.0) {
            let observed_treated = self.data.subjects().iter().filter(|s| s.arm == Arm::Treated).count();
            return Err(ValueError::NoConcordantSubjects {
                assigned_control,
                assigned_treated,
                observed_control: self.m() - observed_treated,
                observed_treated,
            });
        }
        Ok(weights)
    }

    fn hajek(&self, weights: &[f64]) -> f64 {
        let num: f64 = self.data.subjects().iter().zip(weights).map(|(s, w)| s.outcome * w).sum();
        let den: f64 = weights.iter().sum();
        num / den
    }

    fn influence(&self, weights: &[f64], v_hat: f64) -> Vec<f64> {
        self.data.subjects().iter().zip(weights).map(|(s, w)| (s.outcome - v_hat) * w).collect()
    }

    fn w_hat(&self, prop: &PropensityModel, u: &[f64]) -> Result<Vec<f64>, ValueError> {
        let dim = self.data.p() + 1;
        if prop.is_known() {
            return Ok(vec![0.0; dim]);
        }
        let mut acc = vec![0.0; dim];
        for ((s, x), (ui, pi)) in self.data.subjects().iter().zip(&self.rows).zip(u.iter().zip(&self.pi)) {
            if *ui == 0.0 {
                continue;
            }
            let phi = prop.phi(s.arm, x)?;
            for (a, f) in acc.iter_mut().zip(&phi) {
                *a += f * ui / pi;
            }
        }
        let m = self.m() as f64;
        Ok(acc.into_iter().map(|a| a / m).collect())
    }

    fn estimate(
        &self,
        rule: &DecisionRule,
        prop: &PropensityModel,
        n_train: usize,
        opts: VarianceOptions,
    ) -> Result<ValueEstimate, ValueError> {
        let weights = self.concordance_weights(rule)?;
        let v_hat = self.hajek(&weights);
        let u = self.influence(&weights, v_hat);
        let w = self.w_hat(prop, &u)?;
        let used_correction = !prop.is_known() && !opts.ignore_correction;
        let mut variance = centered_sum_of_squares(&u) / (self.m() as f64).powi(2);
        if used_correction {
            variance += quadratic_form(prop, &w);
        }
        Ok(ValueEstimate { v_hat, variance, m: self.m(), n: n_train, u, w, used_correction })
    }
}

fn centered_sum_of_squares(u: &[f64]) -> f64 {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter().map(|x| (x - mean).powi(2)).sum()
}

/// `wᵀ Σ̂ₙ w`; zero for a known propensity.
fn quadratic_form(prop: &PropensityModel, w: &[f64]) -> f64 {
    match prop.sigma() {
        None => 0.0,
        Some(sigma) => {
            let w = DVector::from_column_slice(w);
            w.dot(&(sigma * &w))
        }
    }
}

/// Hajek inverse-propensity-weighted value of `rule` on `test`.
pub fn estimate_value(test: &Dataset, rule: &DecisionRule, prop: &PropensityModel) -> Result<f64, ValueError> {
    let view = TestView::new(test, prop)?;
    let weights = view.concordance_weights(rule)?;
    Ok(view.hajek(&weights))
}

/// Per-subject influence values `Ûᵢ` around `v_hat`.
pub fn influence_values(
    test: &Dataset,
    rule: &DecisionRule,
    prop: &PropensityModel,
    v_hat: f64,
) -> Result<Vec<f64>, ValueError> {
    let view = TestView::new(test, prop)?;
    let weights = view.concordance_weights(rule)?;
    Ok(view.influence(&weights, v_hat))
}

/// Propensity-correction vector `Ŵ`, zero for a known propensity.
pub fn w_hat(test: &Dataset, rule: &DecisionRule, prop: &PropensityModel, u: &[f64]) -> Result<Vec<f64>, ValueError> {
    let _ = rule;
    let view = TestView::new(test, prop)?;
    if u.len() != view.m() {
        return Err(ValueError::LengthMismatch { expected: view.m(), got: u.len() });
    }
    view.w_hat(prop, u)
}

/// Value estimate of one rule with its influence-function variance.
pub fn variance_single(
    test: &Dataset,
    rule: &DecisionRule,
    prop: &PropensityModel,
    n_train: usize,
    opts: VarianceOptions,
) -> Result<ValueEstimate, ValueError> {
    if n_train == 0 {
        return Err(ValueError::BadTrainingSize);
    }
    TestView::new(test, prop)?.estimate(rule, prop, n_train, opts)
}

/// Paired comparison `V̂(d₁) - V̂(d₂)` with a two-sided normal test.
pub fn compare(
    test: &Dataset,
    rule1: &DecisionRule,
    rule2: &DecisionRule,
    prop: &PropensityModel,
    n_train: usize,
    opts: VarianceOptions,
) -> Result<Comparison, ValueError> {
    if n_train == 0 {
        return Err(ValueError::BadTrainingSize);
    }
    let view = TestView::new(test, prop)?;
    let mut identical = true;
    for s in test.subjects() {
        if rule1.evaluate(s)? != rule2.evaluate(s)? {
            identical = false;
            break;
        }
    }
    if identical {
        return Err(ValueError::DegenerateComparison);
    }
    let first = view.estimate(rule1, prop, n_train, opts)?;
    let second = view.estimate(rule2, prop, n_train, opts)?;
    let diff: Vec<f64> = first.u.iter().zip(&second.u).map(|(a, b)| a - b).collect();
    let mut variance = centered_sum_of_squares(&diff) / (view.m() as f64).powi(2);
    if first.used_correction {
        let dw: Vec<f64> = first.w.iter().zip(&second.w).map(|(a, b)| a - b).collect();
        variance += quadratic_form(prop, &dw);
    }
    let delta = first.v_hat - second.v_hat;
    if variance <= 0.0 {
        return Err(ValueError::DegenerateComparison);
    }
    let t = delta / variance.sqrt();
    Ok(Comparison { delta, variance, t, p: two_sided_p(t), first, second })
}
