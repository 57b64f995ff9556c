//! Small numeric helpers shared across modules.

use libm::erfc;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value `2 (1 - Φ(|t|))`, computed through `erfc` to keep tail precision.
pub fn two_sided_p(t: f64) -> f64 {
    erfc(t.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Mean computed as `x[0] + Σ (x[k] - x[0]) / K`.
///
/// Returns `x[0]` bit-for-bit when all entries are equal.
pub fn anchored_mean(xs: &[f64]) -> f64 {
    let first = xs[0];
    first + xs.iter().map(|x| x - first).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation, `None` with fewer than two values.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mean = anchored_mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}
