//! Multiple imputation and Rubin-style pooling.
//!
//! [`impute`] runs `K` independent chains of a chained gaussian-regression
//! imputer. Each chain starts from column means, then repeatedly regresses
//! every incomplete covariate on the other covariates plus arm and outcome
//! and redraws its missing cells as prediction plus residual noise.
//!
//! Per-imputation estimates are pooled with
//!
//! ```text
//! Ṽ   = K⁻¹ Σ V̂ₖ
//! var = (1 + 1/K) (K - 1)⁻¹ Σ (V̂ₖ - Ṽ)²  +  K⁻¹ Σ σ̂²ₖ
//! ```
//!
//! and the same for paired differences. The propensity covariance pools
//! within-fit covariances with the outer-product spread of the `θ̂ₖ`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{write_csv, DataError, Dataset, Subject};
use crate::glm::MleFit;
use crate::rng::{stream_rng, Purpose};
use crate::stats::{anchored_mean, two_sided_p};
use crate::value::{Comparison, ValueEstimate};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MAX_SWEEPS: usize = 10;

#[derive(Debug, Error)]
pub enum MiError {
    #[error("number of imputations must be >= 1")]
    NoImputations,

    #[error("covariate `{0}` has no observed values")]
    AllMissingColumn(String),

    #[error("covariate `{column}` has {observed} observed value(s); need at least 2")]
    InsufficientRows { column: String, observed: usize },

    #[error("pooled inputs disagree in dimension: {0}")]
    DimensionMismatch(String),

    #[error("pooled difference and its variance are both zero")]
    DegenerateComparison,

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Produces one completed copy of a dataset.
pub trait Imputer: Sync {
    /// Completes `data` using random stream `chain` under `seed`.
    fn complete(&self, data: &Dataset, seed: u64, chain: u64) -> Result<Dataset, MiError>;
}

/// Chained linear-regression imputer with gaussian draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainedRegressionImputer {
    pub max_sweeps: usize,
}

impl Default for ChainedRegressionImputer {
    fn default() -> Self {
        ChainedRegressionImputer { max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

/// Checks every column has at least two observed cells.
fn check_columns(data: &Dataset) -> Result<(), MiError> {
    for j in 0..data.p() {
        let observed = data.subjects().iter().filter(|s| s.covariates[j].is_some()).count();
        let column = data.covariate_names()[j].clone();
        match observed {
            0 => return Err(MiError::AllMissingColumn(column)),
            1 => return Err(MiError::InsufficientRows { column, observed }),
            _ => {}
        }
    }
    Ok(())
}

impl Imputer for ChainedRegressionImputer {
    fn complete(&self, data: &Dataset, seed: u64, chain: u64) -> Result<Dataset, MiError> {
        check_columns(data)?;
        if data.is_complete() {
            return Ok(data.clone());
        }
        let n = data.len();
        let p = data.p();
        let subjects = data.subjects();

        // Column-major working copy.
        let mut cols: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let obs: Vec<f64> = subjects.iter().filter_map(|s| s.covariates[j]).collect();
                let mean = obs.iter().sum::<f64>() / obs.len() as f64;
                subjects.iter().map(|s| s.covariates[j].unwrap_or(mean)).collect()
            })
            .collect();
        let missing: Vec<Vec<usize>> = (0..p)
            .map(|j| (0..n).filter(|&i| subjects[i].covariates[j].is_none()).collect())
            .collect();
        let arm: Vec<f64> = subjects.iter().map(|s| s.arm.indicator()).collect();
        let y: Vec<f64> = subjects.iter().map(|s| s.outcome).collect();

        let mut rng = stream_rng(seed, chain, Purpose::Impute);
        // Predictors: intercept, the other p-1 covariates, arm, outcome.
        let q = p + 2;
        let mut z = vec![0.0; q];
        for _ in 0..self.max_sweeps {
            for j in 0..p {
                if missing[j].is_empty() {
                    continue;
                }
                let fill_row = |i: usize, z: &mut [f64], cols: &[Vec<f64>]| {
                    z[0] = 1.0;
                    let mut k = 1;
                    for (c, col) in cols.iter().enumerate() {
                        if c != j {
                            z[k] = col[i];
                            k += 1;
                        }
                    }
                    z[k] = arm[i];
                    z[k + 1] = y[i];
                };
                let mut gram = DMatrix::<f64>::zeros(q, q);
                let mut rhs = DVector::<f64>::zeros(q);
                let mut n_obs = 0usize;
                let mut is_missing = vec![false; n];
                for &i in &missing[j] {
                    is_missing[i] = true;
                }
                for i in (0..n).filter(|&i| !is_missing[i]) {
                    fill_row(i, &mut z, &cols);
                    let t = cols[j][i];
                    for a in 0..q {
                        rhs[a] += z[a] * t;
                        for b in 0..=a {
                            gram[(a, b)] += z[a] * z[b];
                        }
                    }
                    n_obs += 1;
                }
                for a in 0..q {
                    for b in 0..a {
                        gram[(b, a)] = gram[(a, b)];
                    }
                }
                let coef = solve_least_squares(gram, rhs);
                let mut rss = 0.0;
                for i in (0..n).filter(|&i| !is_missing[i]) {
                    fill_row(i, &mut z, &cols);
                    let pred: f64 = z.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
                    rss += (cols[j][i] - pred).powi(2);
                }
                let df = n_obs.saturating_sub(q).max(1);
                let sd = (rss / df as f64).sqrt();
                for &i in &missing[j] {
                    fill_row(i, &mut z, &cols);
                    let pred: f64 = z.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
                    let noise: f64 = rng.sample(StandardNormal);
                    cols[j][i] = pred + sd * noise;
                }
            }
        }

        let completed = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| Subject {
                id: s.id.clone(),
                covariates: (0..p).map(|j| Some(s.covariates[j].unwrap_or(cols[j][i]))).collect(),
                arm: s.arm,
                outcome: s.outcome,
            })
            .collect();
        Ok(data.with_subjects(completed)?)
    }
}

/// Solves the normal equations, falling back to a pseudo-inverse when the
/// Gram matrix is singular (e.g. collinear predictors).
fn solve_least_squares(gram: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    if let Some(chol) = gram.clone().cholesky() {
        let sol = chol.solve(&rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return sol;
        }
    }
    gram.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(rhs.len()))
}

/// `K` completed datasets sharing ids and row order with their source.
#[derive(Debug, Clone)]
pub struct ImputationStack {
    pub source: Dataset,
    pub completions: Vec<Dataset>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackManifest {
    pub k: usize,
    pub rows: usize,
    pub p: usize,
    pub missing_cells: usize,
    pub files: Vec<String>,
}

impl ImputationStack {
    pub fn k(&self) -> usize {
        self.completions.len()
    }

    /// Writes `imputation_01.csv` .. `imputation_K.csv` and `manifest.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<StackManifest, MiError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let width = self.k().to_string().len().max(2);
        let mut files = Vec::with_capacity(self.k());
        for (k, d) in self.completions.iter().enumerate() {
            let name = format!("imputation_{:0width$}.csv", k + 1);
            write_csv(d, dir.join(&name))?;
            files.push(name);
        }
        let manifest = StackManifest {
            k: self.k(),
            rows: self.source.len(),
            p: self.source.p(),
            missing_cells: self.source.missing_count(),
            files,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

/// `k` chained-regression imputations of `data`.
pub fn impute(data: &Dataset, k: usize, max_sweeps: usize, seed: u64) -> Result<ImputationStack, MiError> {
    impute_with(&ChainedRegressionImputer { max_sweeps }, data, k, seed)
}

/// `k` imputations with any [`Imputer`]; chains run in parallel.
pub fn impute_with(imputer: &dyn Imputer, data: &Dataset, k: usize, seed: u64) -> Result<ImputationStack, MiError> {
    if k == 0 {
        return Err(MiError::NoImputations);
    }
    let completions = (0..k as u64)
        .into_par_iter()
        .map(|chain| imputer.complete(data, seed, chain))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ImputationStack { source: data.clone(), completions })
}

/// Between-imputation factor `(1 + 1/K) / (K - 1)`; zero for `K = 1`.
fn between_factor(k: usize) -> f64 {
    if k < 2 {
        0.0
    } else {
        (1.0 + 1.0 / k as f64) / (k - 1) as f64
    }
}

/// Pooled propensity covariance from `K` fits on imputed training sets.
pub fn pooled_sigma(fits: &[MleFit]) -> Result<DMatrix<f64>, MiError> {
    let first = fits.first().ok_or(MiError::NoImputations)?;
    let d = first.theta.len();
    for f in fits {
        if f.theta.len() != d || f.covariance.shape() != (d, d) {
            return Err(MiError::DimensionMismatch(format!(
                "theta length {} vs {d}",
                f.theta.len()
            )));
        }
    }
    let k = fits.len();
    let mut pooled = DMatrix::from_fn(d, d, |a, b| {
        anchored_mean(&fits.iter().map(|f| f.covariance[(a, b)]).collect::<Vec<_>>())
    });
    let factor = between_factor(k);
    if factor > 0.0 {
        let theta_bar: Vec<f64> =
            (0..d).map(|j| anchored_mean(&fits.iter().map(|f| f.theta[j]).collect::<Vec<_>>())).collect();
        let mut between = DMatrix::<f64>::zeros(d, d);
        for f in fits {
            let dev = DVector::from_iterator(d, f.theta.iter().zip(&theta_bar).map(|(t, m)| t - m));
            between += &dev * dev.transpose();
        }
        pooled += between * factor;
    }
    Ok(pooled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledValue {
    pub v_tilde: f64,
    pub variance: f64,
    pub within: f64,
    pub between: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledComparison {
    pub delta: f64,
    pub variance: f64,
    pub t: f64,
    pub p: f64,
    pub within: f64,
    pub between: f64,
    pub k: usize,
}

/// Rubin pooling of a scalar estimate: returns (mean, within, between).
fn rubin(estimates: &[f64], variances: &[f64]) -> (f64, f64, f64) {
    let mean = anchored_mean(estimates);
    let within = anchored_mean(variances);
    let spread: f64 = estimates.iter().map(|e| (e - mean).powi(2)).sum();
    (mean, within, between_factor(estimates.len()) * spread)
}

pub fn pooled_value(per_k: &[ValueEstimate]) -> Result<PooledValue, MiError> {
    let first = per_k.first().ok_or(MiError::NoImputations)?;
    if let Some(bad) = per_k.iter().find(|e| e.m != first.m) {
        return Err(MiError::DimensionMismatch(format!("test size {} vs {}", bad.m, first.m)));
    }
    let v: Vec<f64> = per_k.iter().map(|e| e.v_hat).collect();
    let s: Vec<f64> = per_k.iter().map(|e| e.variance).collect();
    let (v_tilde, within, between) = rubin(&v, &s);
    Ok(PooledValue { v_tilde, variance: within + between, within, between, k: per_k.len() })
}

pub fn pooled_compare(per_k: &[Comparison]) -> Result<PooledComparison, MiError> {
    let first = per_k.first().ok_or(MiError::NoImputations)?;
    if let Some(bad) = per_k.iter().find(|c| c.first.m != first.first.m) {
        return Err(MiError::DimensionMismatch(format!("test size {} vs {}", bad.first.m, first.first.m)));
    }
    let d: Vec<f64> = per_k.iter().map(|c| c.delta).collect();
    let s: Vec<f64> = per_k.iter().map(|c| c.variance).collect();
    let (delta, within, between) = rubin(&d, &s);
    let variance = within + between;
    if variance <= 0.0 {
        return Err(MiError::DegenerateComparison);
    }
    let t = delta / variance.sqrt();
    Ok(PooledComparison { delta, variance, t, p: two_sided_p(t), within, between, k: per_k.len() })
}
