//! Synthetic two-arm study with a binary outcome, and a replicate harness.
//!
//! Covariates are independent standard normals. With
//! `m(x) = β₀ + Σ βⱼxⱼ` and `c(x) = γ₀ + Σ γⱼxⱼ`,
//!
//! ```text
//! Y ~ Bernoulli(expit(m(x)² + c(x)·a + ε)),   ε ~ N(0, 1)
//! β₀ = 1/√6,  β₃..β₁₀ = 1/(2√6),  (γ₀..γ₄) = (1, 1, -1, 1, -1),  others 0
//! ```
//!
//! Smaller outcomes are better, so the optimal rule treats exactly when
//! `c(x) < 0`. Scenarios:
//!
//! | scenario | assignment                      | covariates          |
//! |----------|---------------------------------|---------------------|
//! | a        | P(a = 1) = 0.5                  | complete            |
//! | b        | P(a = 1) = 0.5                  | missing at random   |
//! | c        | logit P(a = 1) = 0.75x₁ - 0.75x₂ | complete            |
//! | d        | logit P(a = 1) = 0.75x₁ - 0.75x₂ | missing at random   |
//!
//! Under the missingness mechanism each of `x₂..x_p` is dropped with
//! probability 0.15 when `x₁ > 0` and 0.10 otherwise.
//!
//! Datasets depend only on `(seed, replicate)`: scenarios a and b see the
//! same complete data, as do c and d, and replicates can run in any order
//! or in parallel with identical results.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate, fit_stack, complete_split, PipelineOptions, PropensityMode, RuleName, DEFAULT_PAIRS};
use crate::data::{split, Arm, Dataset, Split, Subject};
use crate::error::Error;
use crate::glm::{DEFAULT_ALPHA, DEFAULT_FOLDS};
use crate::mi::{DEFAULT_K, DEFAULT_MAX_SWEEPS};
use crate::propensity::{PropensityModel, DEFAULT_CLIP};
use crate::regimes::{misclassification, DecisionRule, Prefer};
use crate::report::{ReportRow, RowKind};
use crate::rng::{derive_seed, stream_rng, Purpose};
use crate::stats::{expit, sample_sd};
use crate::value::estimate_value;

/// Propensity slopes on `(x₁, x₂)` in the observational scenarios.
pub const OBSERVATIONAL_SLOPES: [f64; 2] = [0.75, -0.75];
/// Missingness probability of `x₂..x_p` when `x₁ > 0`, and otherwise.
pub const MAR_RATES: (f64, f64) = (0.15, 0.10);
/// Significance level used for rejection counts.
pub const ALPHA_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    A,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn observational(self) -> bool {
        matches!(self, Scenario::C | Scenario::D)
    }

    pub fn has_missing(self) -> bool {
        matches!(self, Scenario::B | Scenario::D)
    }

    /// The same assignment mechanism with complete covariates.
    pub fn complete_counterpart(self) -> Scenario {
        match self {
            Scenario::A | Scenario::B => Scenario::A,
            Scenario::C | Scenario::D => Scenario::C,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::C => "c",
            Scenario::D => "d",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            "d" => Ok(Scenario::D),
            other => Err(format!("unknown scenario `{other}`; valid scenarios are a, b, c, d")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_total: usize,
    pub train_fraction: f64,
    pub p: usize,
    pub replicates: usize,
    pub k: usize,
    pub oracle_size: usize,
    pub seed: u64,
    pub alpha: f64,
    pub n_folds: usize,
    pub max_sweeps: usize,
    pub clip: f64,
    /// Multiplier on the covariate interaction terms `γ₁..γ_p`.
    pub interaction_scale: f64,
    /// Sets every `γ` to zero, including `γ₀`.
    pub null_treatment: bool,
    /// Train and evaluate the Q- and D-learning rules. When false only the
    /// observed and constant rules are evaluated.
    pub learners: bool,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            n_total: 5000,
            train_fraction: 0.7,
            p: 20,
            replicates: 10,
            k: DEFAULT_K,
            oracle_size: 10_000,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            n_folds: DEFAULT_FOLDS,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            clip: DEFAULT_CLIP,
            interaction_scale: 1.0,
            null_treatment: false,
            learners: true,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.p < 11 {
            return bad(format!("p must be >= 11, got {}", self.p));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        let n_train = (self.train_fraction * self.n_total as f64).round() as usize;
        if n_train < 2 * self.n_folds.max(2) || self.n_total - n_train.min(self.n_total) < 2 {
            return bad(format!("n = {} is too small for the split and {} folds", self.n_total, self.n_folds));
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.oracle_size == 0 {
            return bad("oracle size must be >= 1".into());
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
        if !self.interaction_scale.is_finite() {
            return bad("interaction scale must be finite".into());
        }
        Ok(())
    }

    /// `(β₀, β₁..β_p)`.
    pub fn beta(&self) -> Vec<f64> {
        let b0 = 1.0 / 6f64.sqrt();
        let mut beta = vec![0.0; self.p + 1];
        beta[0] = b0;
        for b in &mut beta[3..=10] {
            *b = b0 / 2.0;
        }
        beta
    }

    /// `(γ₀, γ₁..γ_p)`.
    pub fn gamma(&self) -> Vec<f64> {
        let mut gamma = vec![0.0; self.p + 1];
        if self.null_treatment {
            return gamma;
        }
        gamma[0] = 1.0;
        for (g, v) in gamma[1..=4].iter_mut().zip([1.0, -1.0, 1.0, -1.0]) {
            *g = v * self.interaction_scale;
        }
        gamma
    }

    /// True arm-probability model.
    pub fn true_propensity(&self) -> PropensityModel {
        let model = if self.scenario.observational() {
            let mut theta = vec![0.0; self.p + 1];
            theta[1] = OBSERVATIONAL_SLOPES[0];
            theta[2] = OBSERVATIONAL_SLOPES[1];
            let d = theta.len();
            PropensityModel::logistic(theta, nalgebra::DMatrix::zeros(d, d), self.oracle_size)
        } else {
            PropensityModel::known(0.5)
        };
        model.and_then(|m| m.with_clip(self.clip)).expect("validated config")
    }

    fn pipeline(&self, replicate: usize) -> PipelineOptions {
        let (rules, pairs) = if self.learners {
            (RuleName::ALL.to_vec(), DEFAULT_PAIRS.to_vec())
        } else {
            (vec![RuleName::Obs, RuleName::All0, RuleName::All1], vec![(RuleName::All0, RuleName::All1)])
        };
        PipelineOptions {
            propensity: if self.scenario.observational() { PropensityMode::Fit } else { PropensityMode::Known { pi1: 0.5 } },
            clip: self.clip,
            rules,
            pairs,
            k: self.k,
            max_sweeps: self.max_sweeps,
            alpha: self.alpha,
            n_folds: self.n_folds,
            prefer: Prefer::Smaller,
            q_family: None,
            d_family: None,
            ignore_correction: false,
            seed: derive_seed(self.seed, replicate as u64, Purpose::Replicate),
        }
    }
}

/// Large complete sample drawn under the true assignment mechanism, used
/// for population values.
#[derive(Debug, Clone)]
pub struct TruthOracle {
    pub giant_test: Dataset,
    pub true_propensity: PropensityModel,
}

/// One replicate's data.
#[derive(Debug, Clone)]
pub struct Generated {
    /// The split the estimators see (with missing cells in b and d).
    pub split: Split,
    /// The same split before any cells were removed.
    pub complete: Split,
}

fn draw_subjects(cfg: &ScenarioConfig, n: usize, rng: &mut impl Rng, prefix: &str) -> Vec<Subject> {
    let beta = cfg.beta();
    let gamma = cfg.gamma();
    let prop = cfg.true_propensity();
    let mut x = vec![0.0; cfg.p];
    (0..n)
        .map(|i| {
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let u_arm: f64 = rng.random();
            let eps: f64 = rng.sample(StandardNormal);
            let u_y: f64 = rng.random();
            let arm = if u_arm < prop.pi_unclipped(Arm::Treated, &x) { Arm::Treated } else { Arm::Control };
            let main = beta[0] + beta[1..].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
            let contrast = gamma[0] + gamma[1..].iter().zip(&x).map(|(g, v)| g * v).sum::<f64>();
            let prob = expit(main * main + contrast * arm.indicator() + eps);
            let y = if u_y < prob { 1.0 } else { 0.0 };
            Subject::complete(format!("{prefix}{i}"), &x, arm, y)
        })
        .collect()
}

/// Population oracle, shared by all replicates of a study.
pub fn truth_oracle(cfg: &ScenarioConfig) -> Result<TruthOracle, Error> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0, Purpose::Oracle);
    let giant_test = Dataset::new(draw_subjects(cfg, cfg.oracle_size, &mut rng, "o"), cfg.p)?;
    Ok(TruthOracle { giant_test, true_propensity: cfg.true_propensity() })
}

/// Data for replicate `index`.
pub fn generate(cfg: &ScenarioConfig, index: usize) -> Result<Generated, Error> {
    cfg.validate()?;
    let idx = index as u64;
    let mut rng = stream_rng(cfg.seed, idx, Purpose::Generate);
    let full = Dataset::new(draw_subjects(cfg, cfg.n_total, &mut rng, ""), cfg.p)?;
    let complete = split(&full, cfg.train_fraction, derive_seed(cfg.seed, idx, Purpose::Split))?;
    let split = if cfg.scenario.has_missing() {
        Split {
            train: apply_mar(&complete.train, derive_seed(cfg.seed, 2 * idx, Purpose::Missingness)),
            test: apply_mar(&complete.test, derive_seed(cfg.seed, 2 * idx + 1, Purpose::Missingness)),
        }
    } else {
        complete.clone()
    };
    Ok(Generated { split, complete })
}

/// Removes cells of `x₂..x_p` at random, more often when `x₁ > 0`.
pub fn apply_mar(data: &Dataset, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0, Purpose::Missingness);
    let subjects = data
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            let rate = match s.covariates.first().copied().flatten() {
                Some(x1) if x1 > 0.0 => MAR_RATES.0,
                _ => MAR_RATES.1,
            };
            for c in s.covariates.iter_mut().skip(1) {
                if rng.random::<f64>() < rate {
                    *c = None;
                }
            }
            s
        })
        .collect();
    data.with_subjects(subjects).expect("same ids and widths")
}

/// The optimal rule: treat iff `c(x) < 0`.
pub fn oracle_rule(cfg: &ScenarioConfig) -> DecisionRule {
    DecisionRule::linear(cfg.gamma(), Prefer::Smaller)
}

/// Value of `rule` on the oracle sample under the true propensity.
pub fn true_value(rule: &DecisionRule, oracle: &TruthOracle) -> Result<f64, Error> {
    Ok(estimate_value(&oracle.giant_test, rule, &oracle.true_propensity)?)
}

/// Mean squared deviation of per-replicate estimates from their population values.
pub fn true_variance(estimates: &[f64], truths: &[f64]) -> Result<f64, Error> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::Config(format!(
            "need matching non-empty inputs, got {} estimates and {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    Ok(estimates.iter().zip(truths).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / estimates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub name: RuleName,
    pub estimate: Option<f64>,
    pub sd: Option<f64>,
    pub mc: Option<f64>,
    pub true_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub name1: RuleName,
    pub name2: RuleName,
    pub delta: Option<f64>,
    pub sd: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub true_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub pooled: bool,
    pub rules: Vec<RuleOutcome>,
    pub pairs: Vec<PairOutcome>,
}

impl ReplicateOutcome {
    pub fn rule(&self, name: RuleName) -> Option<&RuleOutcome> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn pair(&self, a: RuleName, b: RuleName) -> Option<&PairOutcome> {
        self.pairs.iter().find(|p| p.name1 == a && p.name2 == b)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Runs one replicate end to end against a precomputed oracle.
pub fn run_replicate(cfg: &ScenarioConfig, index: usize, oracle: &TruthOracle) -> Result<ReplicateOutcome, Error> {
    let generated = generate(cfg, index)?;
    let opts = cfg.pipeline(index);
    let completions = complete_split(&generated.split, &opts)?;
    let fitted = fit_stack(&completions.train, &opts)?;
    let n = generated.split.train.len();
    let eval = evaluate(&completions.test, &fitted, n, completions.imputed, &opts);
    let best = oracle_rule(cfg);

    let truths_for = |rules: &[DecisionRule]| -> Result<f64, Error> {
        let v = rules.iter().map(|r| true_value(r, oracle)).collect::<Result<Vec<_>, _>>()?;
        Ok(mean(&v).expect("k >= 1"))
    };

    let mut rules = Vec::new();
    for (name, res) in &eval.rules {
        let per_k = fitted.rules_for(*name).expect("fitted every requested rule");
        let mc: Vec<f64> = per_k
            .iter()
            .zip(&completions.test)
            .map(|(r, t)| misclassification(r, &best, t))
            .collect::<Result<_, _>>()?;
        let mut out = RuleOutcome {
            name: *name,
            estimate: None,
            sd: None,
            mc: mean(&mc),
            true_value: truths_for(per_k).ok(),
            error: None,
        };
        match res {
            Ok(r) => {
                out.estimate = Some(r.pooled.v_tilde);
                out.sd = Some(r.pooled.variance.sqrt());
            }
            Err(e) => out.error = Some(e.clone()),
        }
        rules.push(out);
    }

    let mut pairs = Vec::new();
    for ((a, b), res) in &eval.pairs {
        let ra = fitted.rules_for(*a).expect("validated pair");
        let rb = fitted.rules_for(*b).expect("validated pair");
        let true_delta = (|| -> Result<f64, Error> { Ok(truths_for(ra)? - truths_for(rb)?) })().ok();
        let mut out = PairOutcome {
            name1: *a,
            name2: *b,
            delta: None,
            sd: None,
            t: None,
            p: None,
            true_delta,
            error: None,
        };
        match res {
            Ok(r) => {
                out.delta = Some(r.pooled.delta);
                out.sd = Some(r.pooled.variance.sqrt());
                out.t = Some(r.pooled.t);
                out.p = Some(r.pooled.p);
            }
            Err(e) => out.error = Some(e.clone()),
        }
        pairs.push(out);
    }

    Ok(ReplicateOutcome { index, m: eval.m, n, k: eval.k, pooled: eval.imputed, rules, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub name: RuleName,
    /// Replicates with a value estimate.
    pub n_ok: usize,
    pub mean_value: Option<f64>,
    /// Across-replicate SD of the estimate; absent with fewer than 2 replicates.
    pub sd_value: Option<f64>,
    /// Mean of the estimated SDs.
    pub mean_sd: Option<f64>,
    pub mean_mc: Option<f64>,
    pub mean_true_value: Option<f64>,
    /// Root mean squared deviation of estimates from their population values.
    pub true_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub name1: RuleName,
    pub name2: RuleName,
    pub n_ok: usize,
    pub mean_delta: Option<f64>,
    pub sd_delta: Option<f64>,
    pub mean_sd: Option<f64>,
    pub mean_t: Option<f64>,
    pub mean_p: Option<f64>,
    /// Replicates with `p < 0.05`.
    pub rejections: usize,
    pub true_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetadata {
    pub propensity: String,
    pub clip: f64,
    pub pooled: bool,
    /// Set on which misclassification is measured. With imputation, the
    /// optimal rule is applied to the same completed covariates as the rule.
    pub observed_mc_set: String,
    pub oracle_rule: DecisionRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub config: ScenarioConfig,
    pub metadata: StudyMetadata,
    pub regimes: Vec<RegimeSummary>,
    pub pairs: Vec<PairSummary>,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<Failure>,
}

fn rmsd(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let (e, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    true_variance(&e, &t).ok().map(f64::sqrt)
}

fn summarize(config: &ScenarioConfig, outcomes: Vec<ReplicateOutcome>, failures: Vec<Failure>) -> ReplicateReport {
    let opts = config.pipeline(0);
    let regimes = opts
        .rules
        .iter()
        .map(|&name| {
            let rows: Vec<&RuleOutcome> = outcomes.iter().filter_map(|o| o.rule(name)).collect();
            let est: Vec<f64> = rows.iter().filter_map(|r| r.estimate).collect();
            let sds: Vec<f64> = rows.iter().filter_map(|r| r.sd).collect();
            let mcs: Vec<f64> = rows.iter().filter_map(|r| r.mc).collect();
            let truths: Vec<f64> = rows.iter().filter_map(|r| r.true_value).collect();
            let paired: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.estimate?, r.true_value?))).collect();
            RegimeSummary {
                name,
                n_ok: est.len(),
                mean_value: mean(&est),
                sd_value: sample_sd(&est),
                mean_sd: mean(&sds),
                mean_mc: mean(&mcs),
                mean_true_value: mean(&truths),
                true_sd: rmsd(&paired),
            }
        })
        .collect();
    let pairs = opts
        .pairs
        .iter()
        .map(|&(a, b)| {
            let rows: Vec<&PairOutcome> = outcomes.iter().filter_map(|o| o.pair(a, b)).collect();
            let deltas: Vec<f64> = rows.iter().filter_map(|r| r.delta).collect();
            let sds: Vec<f64> = rows.iter().filter_map(|r| r.sd).collect();
            let ts: Vec<f64> = rows.iter().filter_map(|r| r.t).collect();
            let ps: Vec<f64> = rows.iter().filter_map(|r| r.p).collect();
            let paired: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.delta?, r.true_delta?))).collect();
            PairSummary {
                name1: a,
                name2: b,
                n_ok: deltas.len(),
                mean_delta: mean(&deltas),
                sd_delta: sample_sd(&deltas),
                mean_sd: mean(&sds),
                mean_t: mean(&ts),
                mean_p: mean(&ps),
                rejections: ps.iter().filter(|p| **p < ALPHA_LEVEL).count(),
                true_sd: rmsd(&paired),
            }
        })
        .collect();
    let metadata = StudyMetadata {
        propensity: match opts.propensity {
            PropensityMode::Known { pi1 } => format!("known:{pi1}"),
            PropensityMode::Fit => "logistic".into(),
        },
        clip: config.clip,
        pooled: config.scenario.has_missing(),
        observed_mc_set: "test".into(),
        oracle_rule: oracle_rule(config),
    };
    ReplicateReport { config: config.clone(), metadata, regimes, pairs, replicates: outcomes, failures }
}

/// Runs every replicate (in parallel) and aggregates. Only configuration
/// problems are returned as errors; a failing replicate is listed in
/// [`ReplicateReport::failures`].
pub fn run_study(config: &ScenarioConfig) -> Result<ReplicateReport, Error> {
    let oracle = truth_oracle(config)?;
    let results: Vec<Result<ReplicateOutcome, Failure>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| run_replicate(config, i, &oracle).map_err(|e| Failure { index: i, error: e.to_string() }))
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => failures.push(f),
        }
    }
    Ok(summarize(config, outcomes, failures))
}

impl ReplicateReport {
    pub fn regime(&self, name: RuleName) -> Option<&RegimeSummary> {
        self.regimes.iter().find(|r| r.name == name)
    }

    pub fn pair(&self, a: RuleName, b: RuleName) -> Option<&PairSummary> {
        self.pairs.iter().find(|p| p.name1 == a && p.name2 == b)
    }

    /// Summary rows. `estimate` and `sd` are the means over replicates of
    /// the estimate and of its estimated SD; `t` and `p` likewise.
    pub fn rows(&self) -> Vec<ReportRow> {
        let m = self.replicates.first().map_or(0, |r| r.m);
        let n = self.replicates.first().map_or(0, |r| r.n);
        let k = if self.config.scenario.has_missing() { self.config.k } else { 1 };
        let pooled = self.config.scenario.has_missing();
        let mut rows: Vec<ReportRow> = self
            .regimes
            .iter()
            .map(|r| ReportRow {
                kind: RowKind::Value,
                name1: r.name.to_string(),
                name2: None,
                estimate: r.mean_value,
                sd: r.mean_sd,
                t: None,
                p: None,
                mc: r.mean_mc,
                pooled,
                k,
                m,
                n,
                error: None,
            })
            .collect();
        rows.extend(self.pairs.iter().map(|p| ReportRow {
            kind: RowKind::Compare,
            name1: p.name1.to_string(),
            name2: Some(p.name2.to_string()),
            estimate: p.mean_delta,
            sd: p.mean_sd,
            t: p.mean_t,
            p: p.mean_p,
            mc: None,
            pooled,
            k,
            m,
            n,
            error: None,
        }));
        rows
    }

    /// Writes `report.tsv`, `report.json` and `config.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), Error> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.tsv"), crate::report::to_tsv_string(&self.rows()))?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)? + "\n")?;
        Ok(())
    }
}
