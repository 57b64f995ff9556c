use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_inputs, GlmError, GlmFamily};
use crate::stats::{expit, logit};

/// Coordinate-descent controls.
///
/// `tol` bounds the largest weighted RMS change of the fitted values
/// (`sqrt(H_j) * |Δβ_j|`) in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_irls: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_sweeps: 10_000, max_irls: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedFit {
    pub intercept: f64,
    /// Slopes on the original (unstandardized) column scale.
    pub coefficients: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub family: GlmFamily,
    pub n_iterations: usize,
    pub converged: bool,
}

impl PenalizedFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    /// Mean response: identity link for gaussian, expit for binomial.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.linear_predictor(row);
        match self.family {
            GlmFamily::Gaussian => eta,
            GlmFamily::Binomial => expit(eta),
        }
    }

    pub fn nonzero_slopes(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Elastic-net solver for one design, reusable along a decreasing penalty path
/// with warm starts.
///
/// Minimizes `(1/n) Σ w_i ℓ(y_i, η_i) + λ [α ‖β‖₁ + (1-α)/2 ‖β‖₂²]` with `β` on
/// the standardized column scale, `ℓ = ½ (y - η)²` for gaussian and the
/// negative Bernoulli log-likelihood for binomial. Weights are rescaled to
/// mean 1. Binomial fits use an IRLS outer loop with step halving.
#[derive(Debug, Clone)]
pub struct PathSolver {
    n: usize,
    cols: Vec<Vec<f64>>,
    varying: Vec<bool>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    family: GlmFamily,
    alpha: f64,
    opts: SolverOptions,
    beta: Vec<f64>,
    b0: f64,
    eta: Vec<f64>,
    lambda_max: f64,
}

impl PathSolver {
    pub fn new(
        x: &DMatrix<f64>,
        y: &[f64],
        weights: Option<&[f64]>,
        family: GlmFamily,
        alpha: f64,
        opts: SolverOptions,
    ) -> Result<Self, GlmError> {
        check_inputs(x, y, weights)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(GlmError::InvalidPenalty { alpha, lambda: 0.0 });
        }
        if family == GlmFamily::Binomial {
            if let Some(&bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(GlmError::InvalidResponse(bad));
            }
        }
        let n = x.nrows();
        let nf = n as f64;
        let w: Vec<f64> = match weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|v| v * nf / total).collect()
            }
            None => vec![1.0; n],
        };

        let q = x.ncols();
        let mut cols = Vec::with_capacity(q);
        let mut varying = Vec::with_capacity(q);
        let mut means = Vec::with_capacity(q);
        let mut scales = Vec::with_capacity(q);
        for j in 0..q {
            let col = x.column(j);
            let mean = col.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / nf;
            let var = col.iter().zip(&w).map(|(v, wi)| wi * (v - mean).powi(2)).sum::<f64>() / nf;
            let sd = var.sqrt();
            let is_varying = sd > 1e-12 * (1.0 + mean.abs());
            means.push(mean);
            scales.push(if is_varying { sd } else { 1.0 });
            varying.push(is_varying);
            cols.push(if is_varying { col.iter().map(|v| (v - mean) / sd).collect() } else { Vec::new() });
        }

        let ybar = y.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / nf;
        let b0 = match family {
            GlmFamily::Gaussian => ybar,
            GlmFamily::Binomial => {
                if ybar <= 0.0 || ybar >= 1.0 {
                    return Err(GlmError::DegenerateResponse);
                }
                logit(ybar)
            }
        };
        let max_grad = cols
            .iter()
            .zip(&varying)
            .filter(|(_, v)| **v)
            .map(|(c, _)| {
                (c.iter().zip(y).zip(&w).map(|((xs, yi), wi)| wi * xs * (yi - ybar)).sum::<f64>() / nf).abs()
            })
            .fold(0.0, f64::max);
        let lambda_max = max_grad / alpha.max(1e-3);

        Ok(PathSolver {
            n,
            cols,
            varying,
            means,
            scales,
            y: y.to_vec(),
            w,
            family,
            alpha,
            opts,
            beta: vec![0.0; q],
            b0,
            eta: vec![b0; n],
            lambda_max,
        })
    }

    /// Smallest penalty at which every slope is zero.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Fits at `lambda`, warm-starting from the previous solution.
    pub fn fit(&mut self, lambda: f64) -> Result<PenalizedFit, GlmError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(GlmError::InvalidPenalty { alpha: self.alpha, lambda });
        }
        let (sweeps, converged) = match self.family {
            GlmFamily::Gaussian => self.fit_gaussian(lambda),
            GlmFamily::Binomial => self.fit_binomial(lambda),
        };
        Ok(self.snapshot(lambda, sweeps, converged))
    }

    fn fit_gaussian(&mut self, lambda: f64) -> (usize, bool) {
        let v = self.w.clone();
        let mut r: Vec<f64> = self.y.iter().zip(&self.eta).map(|(y, e)| y - e).collect();
        let result = self.descend(&v, &mut r, lambda, self.opts.tol);
        for ((e, y), ri) in self.eta.iter_mut().zip(&self.y).zip(&r) {
            *e = y - ri;
        }
        result
    }

    fn fit_binomial(&mut self, lambda: f64) -> (usize, bool) {
        let mut total_sweeps = 0;
        let mut objective = self.objective(lambda);
        // Early IRLS steps only need a rough inner solution; the tolerance
        // tightens with the outer change and ends at `opts.tol`.
        let mut inner_tol = self.opts.tol.max(1e-6);
        for _ in 0..self.opts.max_irls {
            let mut v = vec![0.0; self.n];
            let mut r = vec![0.0; self.n];
            for i in 0..self.n {
                let mu = expit(self.eta[i]);
                let var = (mu * (1.0 - mu)).max(1e-10);
                v[i] = self.w[i] * var;
                r[i] = (self.y[i] - mu) / var;
            }
            let z: Vec<f64> = self.eta.iter().zip(&r).map(|(e, ri)| e + ri).collect();
            let old_beta = self.beta.clone();
            let old_b0 = self.b0;
            let old_eta = self.eta.clone();

            let (sweeps, inner_ok) = self.descend(&v, &mut r, lambda, inner_tol);
            total_sweeps += sweeps;
            for ((e, zi), ri) in self.eta.iter_mut().zip(&z).zip(&r) {
                *e = zi - ri;
            }

            let mut new_objective = self.objective(lambda);
            let mut halvings = 0;
            while new_objective > objective + 1e-13 * objective.abs() && halvings < 30 {
                for (b, ob) in self.beta.iter_mut().zip(&old_beta) {
                    *b = 0.5 * (*b + ob);
                }
                self.b0 = 0.5 * (self.b0 + old_b0);
                for (e, oe) in self.eta.iter_mut().zip(&old_eta) {
                    *e = 0.5 * (*e + oe);
                }
                new_objective = self.objective(lambda);
                halvings += 1;
            }
            objective = new_objective.min(objective);

            let change = self.max_change(&old_beta, old_b0, &v);
            if inner_ok && inner_tol <= self.opts.tol && change < 10.0 * self.opts.tol {
                return (total_sweeps, true);
            }
            inner_tol = (0.01 * change).min(inner_tol).max(self.opts.tol);
            if total_sweeps >= self.opts.max_sweeps {
                return (total_sweeps, false);
            }
        }
        (total_sweeps, false)
    }

    fn max_change(&self, old_beta: &[f64], old_b0: f64, v: &[f64]) -> f64 {
        let nf = self.n as f64;
        let mut change = (self.b0 - old_b0).abs() * (v.iter().sum::<f64>() / nf).sqrt();
        for j in 0..self.beta.len() {
            if self.varying[j] {
                let h = self.cols[j].iter().zip(v).map(|(x, vi)| vi * x * x).sum::<f64>() / nf;
                change = change.max(h.sqrt() * (self.beta[j] - old_beta[j]).abs());
            }
        }
        change
    }

    fn penalty(&self, lambda: f64) -> f64 {
        let l1: f64 = self.beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = self.beta.iter().map(|b| b * b).sum();
        lambda * (self.alpha * l1 + 0.5 * (1.0 - self.alpha) * l2)
    }

    /// Penalized objective at the current state.
    fn objective(&self, lambda: f64) -> f64 {
        let nf = self.n as f64;
        let loss: f64 = match self.family {
            GlmFamily::Gaussian => {
                self.y.iter().zip(&self.eta).zip(&self.w).map(|((y, e), w)| 0.5 * w * (y - e).powi(2)).sum()
            }
            GlmFamily::Binomial => self
                .y
                .iter()
                .zip(&self.eta)
                .zip(&self.w)
                .map(|((y, e), w)| w * (softplus(*e) - y * e))
                .sum(),
        };
        loss / nf + self.penalty(lambda)
    }

    /// Coordinate descent on `(1/2n) Σ v_i r_i² + λ P(β)` where `r` is the
    /// working residual, updated in place. Full sweeps alternate with sweeps
    /// over the active set until a full sweep changes nothing.
    fn descend(&mut self, v: &[f64], r: &mut [f64], lambda: f64, tol: f64) -> (usize, bool) {
        let nf = self.n as f64;
        let h: Vec<f64> = self
            .cols
            .iter()
            .zip(&self.varying)
            .map(|(c, &var)| if var { c.iter().zip(v).map(|(x, vi)| vi * x * x).sum::<f64>() / nf } else { 0.0 })
            .collect();
        let vsum: f64 = v.iter().sum();
        let all: Vec<usize> = (0..self.beta.len()).filter(|&j| self.varying[j]).collect();
        let mut sweeps = 0;
        loop {
            let change = self.sweep(&all, &h, v, vsum, r, lambda);
            sweeps += 1;
            if change < tol {
                return (sweeps, true);
            }
            if sweeps >= self.opts.max_sweeps {
                return (sweeps, false);
            }
            let active: Vec<usize> = all.iter().copied().filter(|&j| self.beta[j] != 0.0).collect();
            loop {
                let change = self.sweep(&active, &h, v, vsum, r, lambda);
                sweeps += 1;
                if change < tol {
                    break;
                }
                if sweeps >= self.opts.max_sweeps {
                    return (sweeps, false);
                }
            }
        }
    }

    fn sweep(&mut self, idx: &[usize], h: &[f64], v: &[f64], vsum: f64, r: &mut [f64], lambda: f64) -> f64 {
        let nf = self.n as f64;
        let l1 = lambda * self.alpha;
        let l2 = lambda * (1.0 - self.alpha);
        #[cfg(debug_assertions)]
        let before = self.surrogate(v, r, lambda);

        let mut max_change: f64 = 0.0;
        for &j in idx {
            let xj = &self.cols[j];
            let old = self.beta[j];
            let denom = h[j] + l2;
            if denom <= 0.0 {
                continue;
            }
            let grad = xj.iter().zip(v.iter()).zip(r.iter()).map(|((x, vi), ri)| x * vi * ri).sum::<f64>() / nf
                + h[j] * old;
            let new = soft_threshold(grad, l1) / denom;
            if new != old {
                let d = new - old;
                for (ri, x) in r.iter_mut().zip(xj) {
                    *ri -= d * x;
                }
                self.beta[j] = new;
                max_change = max_change.max(h[j].sqrt() * d.abs());
            }
        }
        if vsum > 0.0 {
            let delta = v.iter().zip(r.iter()).map(|(vi, ri)| vi * ri).sum::<f64>() / vsum;
            if delta != 0.0 {
                self.b0 += delta;
                for ri in r.iter_mut() {
                    *ri -= delta;
                }
                max_change = max_change.max(delta.abs() * (vsum / nf).sqrt());
            }
        }

        #[cfg(debug_assertions)]
        {
            let after = self.surrogate(v, r, lambda);
            debug_assert!(
                after <= before + 1e-10 * (1.0 + before.abs()),
                "coordinate sweep increased the objective: {before} -> {after}"
            );
        }
        max_change
    }

    #[cfg(debug_assertions)]
    fn surrogate(&self, v: &[f64], r: &[f64], lambda: f64) -> f64 {
        let nf = self.n as f64;
        v.iter().zip(r).map(|(vi, ri)| 0.5 * vi * ri * ri).sum::<f64>() / nf + self.penalty(lambda)
    }

    fn snapshot(&self, lambda: f64, n_iterations: usize, converged: bool) -> PenalizedFit {
        let coefficients: Vec<f64> = self
            .beta
            .iter()
            .zip(&self.scales)
            .zip(&self.varying)
            .map(|((b, s), &var)| if var { b / s } else { 0.0 })
            .collect();
        let intercept = self.b0 - coefficients.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        PenalizedFit {
            intercept,
            coefficients,
            alpha: self.alpha,
            lambda,
            family: self.family,
            n_iterations,
            converged,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One elastic-net fit from a cold start.
pub fn fit_elastic_net(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: GlmFamily,
    alpha: f64,
    lambda: f64,
) -> Result<PenalizedFit, GlmError> {
    PathSolver::new(x, y, weights, family, alpha, SolverOptions::default())?.fit(lambda)
}

pub fn lambda_max(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: GlmFamily,
    alpha: f64,
) -> Result<f64, GlmError> {
    Ok(PathSolver::new(x, y, weights, family, alpha, SolverOptions::default())?.lambda_max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, q: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n).map(|i| 0.5 + 2.0 * x[(i, 0)] - x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
        (x, y)
    }

    #[test]
    fn full_shrinkage_gives_null_model() {
        let (x, y) = random_problem(1, 60, 4);
        let lmax = lambda_max(&x, &y, None, GlmFamily::Gaussian, 0.5).unwrap();
        let fit = fit_elastic_net(&x, &y, None, GlmFamily::Gaussian, 0.5, lmax * (1.0 + 1e-9)).unwrap();
        assert!(fit.coefficients.iter().all(|b| *b == 0.0));
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.intercept - ybar).abs() < 1e-12);

        let yb: Vec<f64> = y.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..60).map(|i| 1.0 + (i % 3) as f64).collect();
        let lmax = lambda_max(&x, &yb, Some(&w), GlmFamily::Binomial, 1.0).unwrap();
        let fit = fit_elastic_net(&x, &yb, Some(&w), GlmFamily::Binomial, 1.0, 2.0 * lmax).unwrap();
        assert!(fit.coefficients.iter().all(|b| *b == 0.0));
        let wbar = yb.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert!((fit.intercept - logit(wbar)).abs() < 1e-10);
    }

    #[test]
    fn just_below_lambda_max_admits_one_variable() {
        let (x, y) = random_problem(2, 80, 5);
        let lmax = lambda_max(&x, &y, None, GlmFamily::Gaussian, 1.0).unwrap();
        let fit = fit_elastic_net(&x, &y, None, GlmFamily::Gaussian, 1.0, 0.99 * lmax).unwrap();
        assert_eq!(fit.nonzero_slopes(), 1);
    }

    #[test]
    fn univariate_lasso_is_soft_threshold() {
        // Exactly standardized predictor: mean 0, population variance 1.
        let raw = [-1.5, -0.5, 0.0, 0.5, 1.5, 2.0, -2.0, 0.3, -0.3];
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
        let xs: Vec<f64> = raw.iter().map(|v| (v - mean) / sd).collect();
        let y: Vec<f64> = xs.iter().enumerate().map(|(i, v)| 0.7 * v + 0.1 * (i as f64 - 4.0)).collect();
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        let n = y.len() as f64;
        let xty = xs.iter().zip(&y).map(|(a, b)| a * (b - ybar)).sum::<f64>() / n;
        let expected = soft_threshold(xty, 0.1);
        let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
        let fit = fit_elastic_net(&x, &y, None, GlmFamily::Gaussian, 1.0, 0.1).unwrap();
        assert!((fit.coefficients[0] - expected).abs() < 1e-12, "{} vs {}", fit.coefficients[0], expected);
    }

    #[test]
    fn constant_column_gets_zero_coefficient() {
        let (mut x, y) = random_problem(3, 40, 3);
        x.column_mut(1).fill(4.0);
        let fit = fit_elastic_net(&x, &y, None, GlmFamily::Gaussian, 0.5, 0.01).unwrap();
        assert_eq!(fit.coefficients[1], 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (mut x, y) = random_problem(4, 10, 2);
        assert!(matches!(
            fit_elastic_net(&x, &y, None, GlmFamily::Binomial, 0.5, 0.1),
            Err(GlmError::InvalidResponse(_))
        ));
        let ones = vec![1.0; 10];
        assert!(matches!(
            fit_elastic_net(&x, &ones, None, GlmFamily::Binomial, 0.5, 0.1),
            Err(GlmError::DegenerateResponse)
        ));
        assert!(matches!(
            fit_elastic_net(&x, &y, None, GlmFamily::Gaussian, 1.5, 0.1),
            Err(GlmError::InvalidPenalty { .. })
        ));
        x[(0, 0)] = f64::NAN;
        assert!(matches!(
            fit_elastic_net(&x, &y, None, GlmFamily::Gaussian, 0.5, 0.1),
            Err(GlmError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn sweep_cap_flags_nonconvergence() {
        let (x, y) = random_problem(5, 50, 6);
        let opts = SolverOptions { tol: 1e-10, max_sweeps: 3, max_irls: 100 };
        let fit = PathSolver::new(&x, &y, None, GlmFamily::Gaussian, 0.5, opts).unwrap().fit(0.0).unwrap();
        assert!(!fit.converged);
        assert!(fit.n_iterations <= 4);
    }
}
