use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_inputs, GlmError};
use crate::stats::expit;

/// Coefficient norm beyond which the fit is treated as separated.
pub const MAX_THETA_NORM: f64 = 50.0;
/// Largest accepted condition number of the observed information.
pub const MAX_CONDITION: f64 = 1e12;

const GRAD_TOL: f64 = 1e-10;
/// Linear predictors beyond this put fitted probabilities within 1e-13 of 0 or 1.
const MAX_ABS_ETA: f64 = 30.0;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    /// Intercept first, then one slope per design column.
    pub theta: Vec<f64>,
    /// Inverse observed information `(Xᵀ W X)⁻¹`.
    #[serde(with = "crate::matrix_serde")]
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

fn log_likelihood(design: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>) -> f64 {
    let eta = design * theta;
    eta.iter()
        .zip(y)
        .map(|(e, yi)| {
            let log1pexp = if *e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - log1pexp
        })
        .sum()
}

/// Score vector and observed information at `theta`.
fn score_and_information(design: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eta = design * theta;
    let mu: DVector<f64> = eta.map(expit);
    let resid = DVector::from_iterator(y.len(), y.iter().zip(mu.iter()).map(|(yi, m)| yi - m));
    let score = design.tr_mul(&resid);
    let mut weighted = design.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= mu[i] * (1.0 - mu[i]);
    }
    let info = design.tr_mul(&weighted);
    (score, info)
}

/// Newton–Raphson maximum likelihood for `P(y = 1 | x) = expit(θ₀ + xᵀθ)`.
///
/// Fails with [`GlmError::Separation`] when `‖θ‖` exceeds
/// [`MAX_THETA_NORM`], some fitted probability is numerically 0 or 1, or the
/// information is worse conditioned than [`MAX_CONDITION`].
pub fn fit_mle_logistic(x: &DMatrix<f64>, y: &[f64]) -> Result<MleFit, GlmError> {
    check_inputs(x, y, None)?;
    if let Some(&bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(GlmError::InvalidResponse(bad));
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(GlmError::Separation("response takes a single value".into()));
    }

    let design = with_intercept(x);
    let k = design.ncols();
    let mut theta = DVector::<f64>::zeros(k);
    theta[0] = (ones as f64 / (y.len() - ones) as f64).ln();
    let mut ll = log_likelihood(&design, y, &theta);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..MAX_NEWTON {
        iterations = it + 1;
        let (score, info) = score_and_information(&design, y, &theta);
        if score.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        let chol = info.clone().cholesky().ok_or(GlmError::SingularInformation)?;
        let step = chol.solve(&score);
        let mut scale = 1.0;
        let mut candidate = &theta + &step;
        let mut cand_ll = log_likelihood(&design, y, &candidate);
        while cand_ll < ll - 1e-12 * ll.abs() && scale > 1e-10 {
            scale *= 0.5;
            candidate = &theta + &step * scale;
            cand_ll = log_likelihood(&design, y, &candidate);
        }
        let moved = (&candidate - &theta).amax();
        theta = candidate;
        ll = cand_ll;
        if theta.norm() > MAX_THETA_NORM {
            return Err(GlmError::Separation(format!("coefficient norm {:.1} exceeds {MAX_THETA_NORM}", theta.norm())));
        }
        if moved < 1e-15 * (1.0 + theta.amax()) {
            let (score, _) = score_and_information(&design, y, &theta);
            converged = score.amax() < 1e-8;
            break;
        }
    }

    let max_eta = (&design * &theta).amax();
    if max_eta > MAX_ABS_ETA {
        return Err(GlmError::Separation(format!("fitted probabilities are numerically 0 or 1 (|eta| up to {max_eta:.1})")));
    }
    let (_, info) = score_and_information(&design, y, &theta);
    let eig = SymmetricEigen::new(info.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo <= 0.0 {
        return Err(GlmError::SingularInformation);
    }
    if hi / lo > MAX_CONDITION {
        return Err(GlmError::Separation(format!("information condition number {:.3e} exceeds {MAX_CONDITION:e}", hi / lo)));
    }
    let covariance = info.cholesky().ok_or(GlmError::SingularInformation)?.inverse();
    let covariance = (&covariance + covariance.transpose()) * 0.5;

    Ok(MleFit {
        theta: theta.iter().copied().collect(),
        covariance,
        log_likelihood: ll,
        iterations,
        converged,
    })
}
