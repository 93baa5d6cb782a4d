//! Kolmogorov-Smirnov distribution tests.
//!
//! Used to compare sampler output against closed-form references and to
//! check that two simulation routes agree in distribution. P-values use
//! the asymptotic Kolmogorov distribution with the standard small-sample
//! effective-size correction.

use thiserror::Error;

/// KS test errors.
#[derive(Debug, Error)]
pub enum KsError {
    /// Samples must be nonempty.
    #[error("KS test requires a nonempty sample")]
    EmptySample,
    /// Samples must be finite.
    #[error("KS test requires finite sample values")]
    NonFinite,
}

fn sorted_checked(xs: &[f64]) -> Result<Vec<f64>, KsError> {
    if xs.is_empty() {
        return Err(KsError::EmptySample);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(KsError::NonFinite);
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2 k² λ²)`, clamped to [0, 1].
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(stat: f64, n_effective: f64) -> f64 {
    let sqrt_n = n_effective.sqrt();
    kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * stat)
}

/// One-sample KS test of `xs` against the continuous CDF `cdf`.
/// Returns `(statistic, p_value)`.
pub fn one_sample_ks(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64), KsError> {
    let sorted = sorted_checked(xs)?;
    let n = sorted.len() as f64;
    let mut stat: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        stat = stat.max(above.max(below));
    }
    Ok((stat, p_value(stat, n)))
}

/// Two-sample KS test. Returns `(statistic, p_value)` with the p-value
/// computed at the effective size `n·m/(n+m)`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<(f64, f64), KsError> {
    let a = sorted_checked(a)?;
    let b = sorted_checked(b)?;
    let (n, m) = (a.len(), b.len());
    let mut stat: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        let fa = i as f64 / n as f64;
        let fb = j as f64 / m as f64;
        stat = stat.max((fa - fb).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    Ok((stat, p_value(stat, n_eff)))
}
