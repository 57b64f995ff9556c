use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GlmError, GlmFamily, PathSolver, PenalizedFit, SolverOptions};
use crate::rng::{stream_rng, Purpose};
use crate::stats::expit;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_PATH_LEN: usize = 100;
pub const DEFAULT_PATH_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_star: f64,
    pub fit: PenalizedFit,
    pub lambdas: Vec<f64>,
    /// Mean out-of-fold deviance per entry of `lambdas`.
    pub cv_deviance: Vec<f64>,
}

/// `len` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_path(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 || lambda_max <= 0.0 {
        return vec![lambda_max.max(0.0)];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..len).map(|k| (hi + (lo - hi) * k as f64 / (len - 1) as f64).exp()).collect()
}

fn unit_deviance(family: GlmFamily, y: f64, eta: f64) -> f64 {
    match family {
        GlmFamily::Gaussian => (y - eta).powi(2),
        GlmFamily::Binomial => {
            let mu = expit(eta).clamp(1e-15, 1.0 - 1e-15);
            -2.0 * (y * mu.ln() + (1.0 - y) * (1.0 - mu).ln())
        }
    }
}

fn rows_of(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Chooses the penalty minimizing mean out-of-fold deviance, then refits on
/// all rows at that penalty (warm-started down the path).
///
/// The default path has [`DEFAULT_PATH_LEN`] log-spaced values from the
/// full-data `λ_max` to [`DEFAULT_PATH_RATIO`]` · λ_max`. Ties resolve to the
/// larger penalty.
#[allow(clippy::too_many_arguments)]
pub fn cv_select(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: GlmFamily,
    alpha: f64,
    n_folds: usize,
    lambda_path_override: Option<&[f64]>,
    seed: u64,
) -> Result<CvResult, GlmError> {
    let n = x.nrows();
    if n_folds < 2 || n_folds > n {
        return Err(GlmError::InvalidFolds { n_folds, n });
    }
    let opts = SolverOptions::default();
    let mut full = PathSolver::new(x, y, weights, family, alpha, opts)?;
    let lambdas: Vec<f64> = match lambda_path_override {
        Some(path) => {
            let mut p = path.to_vec();
            p.sort_by(|a, b| b.total_cmp(a));
            p
        }
        None => lambda_path(full.lambda_max(), DEFAULT_PATH_LEN, DEFAULT_PATH_RATIO),
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0, Purpose::Folds));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % n_folds;
    }
    let w_all: Vec<f64> = weights.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; n]);

    let per_fold: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|fold| -> Result<Vec<f64>, GlmError> {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let xt = rows_of(x, &train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let wt: Vec<f64> = train.iter().map(|&i| w_all[i]).collect();
            let mut solver = PathSolver::new(&xt, &yt, Some(&wt), family, alpha, opts)?;
            let held_rows: Vec<Vec<f64>> = held.iter().map(|&i| x.row(i).iter().copied().collect()).collect();
            lambdas
                .iter()
                .map(|&lambda| {
                    let fit = solver.fit(lambda)?;
                    Ok(held
                        .iter()
                        .zip(&held_rows)
                        .map(|(&i, row)| w_all[i] * unit_deviance(family, y[i], fit.linear_predictor(row)))
                        .sum())
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let total_w: f64 = w_all.iter().sum();
    let cv_deviance: Vec<f64> = (0..lambdas.len())
        .map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / total_w)
        .collect();
    let best = cv_deviance
        .iter()
        .enumerate()
        .fold(0, |best, (k, d)| if *d < cv_deviance[best] { k } else { best });

    let mut fit = None;
    for &lambda in &lambdas[..=best] {
        fit = Some(full.fit(lambda)?);
    }
    Ok(CvResult {
        lambda_star: lambdas[best],
        fit: fit.expect("path is non-empty"),
        lambdas,
        cv_deviance,
    })
}
