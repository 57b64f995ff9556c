//! End-to-end evaluation of named regimes on a train/test split.
//!
//! The pipeline fits a propensity model and the requested learned rules on
//! the training set, then estimates values and paired comparisons on the
//! test set. If either set has missing covariates, both are imputed `K`
//! times independently, chain `k` of the training set is paired with chain
//! `k` of the test set, and results are pooled across the pairs.
//!
//! Failures of individual regimes or pairs (no concordant subjects, rules
//! identical on the test set) are recorded in their report row; they do not
//! abort the run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, Split};
use crate::error::Error;
use crate::glm::{GlmFamily, MleFit};
use crate::mi::{impute, pooled_compare, pooled_sigma, pooled_value, PooledComparison, PooledValue, DEFAULT_K, DEFAULT_MAX_SWEEPS};
use crate::propensity::{fit_propensity_mle, PropensityModel, DEFAULT_CLIP};
use crate::regimes::{train_d, train_q, DecisionRule, LearnerConfig, Prefer};
use crate::report::{ReportRow, RowKind};
use crate::rng::{derive_seed, Purpose};
use crate::value::{compare, variance_single, Comparison, ValueEstimate, VarianceOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    Obs,
    All0,
    All1,
    Q,
    D,
}

impl RuleName {
    pub const ALL: [RuleName; 5] = [RuleName::Obs, RuleName::All0, RuleName::All1, RuleName::Q, RuleName::D];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleName::Obs => "obs",
            RuleName::All0 => "all0",
            RuleName::All1 => "all1",
            RuleName::Q => "q",
            RuleName::D => "d",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "obs" | "observed" => Ok(RuleName::Obs),
            "all0" => Ok(RuleName::All0),
            "all1" => Ok(RuleName::All1),
            "q" => Ok(RuleName::Q),
            "d" => Ok(RuleName::D),
            other => Err(format!("unknown rule `{other}` (expected obs, all0, all1, q, d)")),
        }
    }
}

/// Pairs reported by default when all five regimes are present.
pub const DEFAULT_PAIRS: [(RuleName, RuleName); 5] = [
    (RuleName::Q, RuleName::Obs),
    (RuleName::Q, RuleName::All0),
    (RuleName::Q, RuleName::All1),
    (RuleName::Q, RuleName::D),
    (RuleName::All0, RuleName::All1),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PropensityMode {
    Known { pi1: f64 },
    Fit,
}

impl FromStr for PropensityMode {
    type Err = String;

    /// `fit` or `known:<pi1>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("fit") {
            return Ok(PropensityMode::Fit);
        }
        if let Some(v) = s.strip_prefix("known:") {
            let pi1: f64 = v.parse().map_err(|_| format!("bad probability in `{s}`"))?;
            if !(pi1 > 0.0 && pi1 < 1.0) {
                return Err(format!("known propensity must lie in (0, 1), got {pi1}"));
            }
            return Ok(PropensityMode::Known { pi1 });
        }
        Err(format!("propensity must be `fit` or `known:<p>`, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub propensity: PropensityMode,
    pub clip: f64,
    pub rules: Vec<RuleName>,
    pub pairs: Vec<(RuleName, RuleName)>,
    /// Number of imputations, used only when covariates are missing.
    pub k: usize,
    pub max_sweeps: usize,
    pub alpha: f64,
    pub n_folds: usize,
    pub prefer: Prefer,
    pub q_family: Option<GlmFamily>,
    pub d_family: Option<GlmFamily>,
    pub ignore_correction: bool,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            propensity: PropensityMode::Fit,
            clip: DEFAULT_CLIP,
            rules: RuleName::ALL.to_vec(),
            pairs: DEFAULT_PAIRS.to_vec(),
            k: DEFAULT_K,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            alpha: crate::glm::DEFAULT_ALPHA,
            n_folds: crate::glm::DEFAULT_FOLDS,
            prefer: Prefer::Smaller,
            q_family: None,
            d_family: None,
            ignore_correction: false,
            seed: 0,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rules.is_empty() {
            return bad("at least one rule is required".into());
        }
        for (a, b) in &self.pairs {
            if !self.rules.contains(a) || !self.rules.contains(b) {
                return bad(format!("pair ({a}, {b}) references a rule that is not evaluated"));
            }
            if a == b {
                return bad(format!("pair ({a}, {b}) compares a rule with itself"));
            }
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.n_folds < 2 {
            return bad(format!("folds must be >= 2, got {}", self.n_folds));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return bad(format!("clip must lie in [0, 0.5), got {}", self.clip));
        }
        Ok(())
    }

    fn learner(&self, family: Option<GlmFamily>) -> LearnerConfig {
        LearnerConfig {
            alpha: self.alpha,
            n_folds: self.n_folds,
            seed: derive_seed(self.seed, 0, Purpose::Folds),
            family,
            prefer: self.prefer,
        }
    }
}

/// Paired training/test completions: one pair for complete data, `K` after imputation.
#[derive(Debug, Clone)]
pub struct Completions {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    pub imputed: bool,
}

impl Completions {
    pub fn k(&self) -> usize {
        self.train.len()
    }
}

/// Imputes both halves of `split` if either has missing covariates.
pub fn complete_split(split: &Split, opts: &PipelineOptions) -> Result<Completions, Error> {
    if split.train.is_complete() && split.test.is_complete() {
        return Ok(Completions { train: vec![split.train.clone()], test: vec![split.test.clone()], imputed: false });
    }
    let train = impute(&split.train, opts.k, opts.max_sweeps, derive_seed(opts.seed, 0, Purpose::Impute))?;
    let test = impute(&split.test, opts.k, opts.max_sweeps, derive_seed(opts.seed, 1, Purpose::Impute))?;
    Ok(Completions { train: train.completions, test: test.completions, imputed: true })
}

/// Propensity models and rules fitted on each training completion.
#[derive(Debug, Clone, Serialize)]
pub struct FittedStack {
    pub propensities: Vec<PropensityModel>,
    #[serde(skip)]
    pub mle: Vec<MleFit>,
    pub rules: Vec<(RuleName, Vec<DecisionRule>)>,
}

impl FittedStack {
    pub fn rules_for(&self, name: RuleName) -> Option<&[DecisionRule]> {
        self.rules.iter().find(|(n, _)| *n == name).map(|(_, r)| r.as_slice())
    }
}

pub fn fit_stack(train: &[Dataset], opts: &PipelineOptions) -> Result<FittedStack, Error> {
    let mut propensities = Vec::with_capacity(train.len());
    let mut mle = Vec::new();
    for t in train {
        match opts.propensity {
            PropensityMode::Known { pi1 } => propensities.push(PropensityModel::known(pi1)?.with_clip(opts.clip)?),
            PropensityMode::Fit => {
                let (model, fit) = fit_propensity_mle(t)?;
                propensities.push(model.with_clip(opts.clip)?);
                mle.push(fit);
            }
        }
    }
    if mle.len() > 1 {
        let sigma = pooled_sigma(&mle)?;
        propensities = propensities.into_iter().map(|p| p.with_sigma(sigma.clone())).collect::<Result<_, _>>()?;
    }

    let mut rules = Vec::with_capacity(opts.rules.len());
    for &name in &opts.rules {
        let per_k = match name {
            RuleName::Obs => vec![DecisionRule::observed(); train.len()],
            RuleName::All0 => vec![DecisionRule::constant(Arm::Control); train.len()],
            RuleName::All1 => vec![DecisionRule::constant(Arm::Treated); train.len()],
            RuleName::Q => {
                let cfg = opts.learner(opts.q_family);
                train.iter().map(|t| train_q(t, &cfg)).collect::<Result<_, _>>()?
            }
            RuleName::D => {
                let cfg = opts.learner(opts.d_family);
                train.iter().zip(&propensities).map(|(t, p)| train_d(t, p, &cfg)).collect::<Result<_, _>>()?
            }
        };
        rules.push((name, per_k));
    }
    Ok(FittedStack { propensities, mle, rules })
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleResult {
    pub name: RuleName,
    pub per_k: Vec<ValueEstimate>,
    pub pooled: PooledValue,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub first: RuleName,
    pub second: RuleName,
    pub per_k: Vec<Comparison>,
    pub pooled: PooledComparison,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub k: usize,
    pub imputed: bool,
    pub m: usize,
    pub n: usize,
    pub rules: Vec<(RuleName, Result<RuleResult, String>)>,
    pub pairs: Vec<((RuleName, RuleName), Result<PairResult, String>)>,
}

impl Evaluation {
    pub fn rule(&self, name: RuleName) -> Option<&RuleResult> {
        self.rules.iter().find(|(n, _)| *n == name).and_then(|(_, r)| r.as_ref().ok())
    }

    pub fn pair(&self, first: RuleName, second: RuleName) -> Option<&PairResult> {
        self.pairs
            .iter()
            .find(|(p, _)| *p == (first, second))
            .and_then(|(_, r)| r.as_ref().ok())
    }

    /// Flat report rows; `mc` supplies an optional misclassification rate per rule.
    pub fn report_rows(&self, mc: impl Fn(RuleName) -> Option<f64>) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for (name, res) in &self.rules {
            let mut row = ReportRow {
                kind: RowKind::Value,
                name1: name.to_string(),
                name2: None,
                estimate: None,
                sd: None,
                t: None,
                p: None,
                mc: mc(*name),
                pooled: self.imputed,
                k: self.k,
                m: self.m,
                n: self.n,
                error: None,
            };
            match res {
                Ok(r) => {
                    row.estimate = Some(r.pooled.v_tilde);
                    row.sd = Some(r.pooled.variance.sqrt());
                }
                Err(e) => row.error = Some(e.clone()),
            }
            rows.push(row);
        }
        for ((a, b), res) in &self.pairs {
            let mut row = ReportRow {
                kind: RowKind::Compare,
                name1: a.to_string(),
                name2: Some(b.to_string()),
                estimate: None,
                sd: None,
                t: None,
                p: None,
                mc: None,
                pooled: self.imputed,
                k: self.k,
                m: self.m,
                n: self.n,
                error: None,
            };
            match res {
                Ok(r) => {
                    row.estimate = Some(r.pooled.delta);
                    row.sd = Some(r.pooled.variance.sqrt());
                    row.t = Some(r.pooled.t);
                    row.p = Some(r.pooled.p);
                }
                Err(e) => row.error = Some(e.clone()),
            }
            rows.push(row);
        }
        rows
    }
}

/// Values and comparisons of the fitted rules on each test completion.
pub fn evaluate(test: &[Dataset], fitted: &FittedStack, n_train: usize, imputed: bool, opts: &PipelineOptions) -> Evaluation {
    let vopts = VarianceOptions { ignore_correction: opts.ignore_correction };
    let k = test.len();
    let rules = fitted
        .rules
        .iter()
        .map(|(name, per_k)| {
            let res = (|| -> Result<RuleResult, Error> {
                let estimates = test
                    .iter()
                    .zip(per_k)
                    .zip(&fitted.propensities)
                    .map(|((t, r), p)| variance_single(t, r, p, n_train, vopts))
                    .collect::<Result<Vec<_>, _>>()?;
                let pooled = pooled_value(&estimates)?;
                Ok(RuleResult { name: *name, per_k: estimates, pooled })
            })();
            (*name, res.map_err(|e| e.to_string()))
        })
        .collect();
    let pairs = opts
        .pairs
        .iter()
        .map(|&(a, b)| {
            let res = (|| -> Result<PairResult, Error> {
                let ra = fitted.rules_for(a).ok_or_else(|| Error::Config(format!("rule {a} not fitted")))?;
                let rb = fitted.rules_for(b).ok_or_else(|| Error::Config(format!("rule {b} not fitted")))?;
                let per_k = (0..k)
                    .map(|i| compare(&test[i], &ra[i], &rb[i], &fitted.propensities[i], n_train, vopts))
                    .collect::<Result<Vec<_>, _>>()?;
                let pooled = pooled_compare(&per_k)?;
                Ok(PairResult { first: a, second: b, per_k, pooled })
            })();
            ((a, b), res.map_err(|e| e.to_string()))
        })
        .collect();
    Evaluation { k, imputed, m: test.first().map_or(0, Dataset::len), n: n_train, rules, pairs }
}

/// Output of [`run_analysis`].
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOutput {
    pub fitted: FittedStack,
    pub evaluation: Evaluation,
    pub rows: Vec<ReportRow>,
}

/// Full pipeline on a split: impute if needed, fit, evaluate.
pub fn run_analysis(split: &Split, opts: &PipelineOptions) -> Result<AnalysisOutput, Error> {
    opts.validate()?;
    if split.train.p() != split.test.p() {
        return Err(Error::Config(format!(
            "training set has {} covariates, test set has {}",
            split.train.p(),
            split.test.p()
        )));
    }
    let completions = complete_split(split, opts)?;
    let fitted = fit_stack(&completions.train, opts)?;
    let evaluation = evaluate(&completions.test, &fitted, split.train.len(), completions.imputed, opts);
    let rows = evaluation.report_rows(|_| None);
    Ok(AnalysisOutput { fitted, evaluation, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names_and_modes() {
        assert_eq!("All1".parse::<RuleName>().unwrap(), RuleName::All1);
        assert!("e".parse::<RuleName>().is_err());
        assert_eq!("known:0.5".parse::<PropensityMode>().unwrap(), PropensityMode::Known { pi1: 0.5 });
        assert_eq!("fit".parse::<PropensityMode>().unwrap(), PropensityMode::Fit);
        assert!("known:1.5".parse::<PropensityMode>().is_err());
    }

    #[test]
    fn pairs_must_reference_rules() {
        let opts = PipelineOptions { rules: vec![RuleName::All0], ..Default::default() };
        assert!(matches!(opts.validate(), Err(Error::Config(_))));
        let opts = PipelineOptions {
            rules: vec![RuleName::All0, RuleName::All1],
            pairs: vec![(RuleName::All0, RuleName::All1)],
            ..Default::default()
        };
        assert!(opts.validate().is_ok());
    }
}
