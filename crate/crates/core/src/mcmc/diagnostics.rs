//! Convergence diagnostics: split R-hat and effective sample size.
//!
//! Both statistics follow the standard split-chain formulations: each
//! chain is halved, the potential scale reduction factor compares
//! between-half and within-half variance, and the effective sample size
//! truncates the autocorrelation sum with Geyer's initial positive and
//! monotone sequence rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{McmcError, PosteriorDraws};
use crate::util::{mean, sample_variance};

/// R-hat above this threshold is reported as a warning, not an error.
pub const RHAT_WARN: f64 = 1.05;

/// Diagnostics of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    /// Split potential scale reduction factor.
    pub rhat: f64,
    /// Effective sample size across all chains.
    pub ess: f64,
    /// Post-warmup Metropolis acceptance rate for this coordinate.
    pub accept_rate: f64,
}

/// Per-parameter diagnostics plus human-readable warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: BTreeMap<String, ParamDiagnostics>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    /// Largest R-hat over all parameters; NaN when empty.
    pub fn worst_rhat(&self) -> f64 {
        self.params.values().map(|p| p.rhat).fold(f64::NAN, f64::max)
    }

    /// Smallest ESS over all parameters; NaN when empty.
    pub fn min_ess(&self) -> f64 {
        self.params.values().map(|p| p.ess).fold(f64::NAN, f64::min)
    }
}

/// Splits each chain column in half; odd lengths drop the middle draw.
fn split_halves(draws: &PosteriorDraws, p: usize) -> Vec<Vec<f64>> {
    let n = draws.iters_per_chain();
    let half = n / 2;
    let mut out = Vec::with_capacity(draws.chains() * 2);
    for c in 0..draws.chains() {
        let col = draws.chain_column(c, p);
        out.push(col[..half].to_vec());
        out.push(col[n - half..].to_vec());
    }
    out
}

fn check_param(draws: &PosteriorDraws, name: &str) -> Result<usize, McmcError> {
    draws.param_index(name).ok_or_else(|| McmcError::UnknownParam(name.to_string()))
}

fn check_not_constant(chains: &[Vec<f64>], name: &str) -> Result<(), McmcError> {
    let first = chains[0][0];
    let all_same = chains.iter().flatten().all(|&x| (x - first).abs() < 1e-300);
    if all_same {
        return Err(McmcError::ConstantChain(name.to_string()));
    }
    Ok(())
}

/// Split R-hat of the named parameter.
///
/// With m split chains of length n, means x̄_j and sample variances s²_j:
/// B = n · var(x̄_j), W = mean(s²_j), R-hat = sqrt((B/W + n - 1)/n).
pub fn split_rhat(draws: &PosteriorDraws, name: &str) -> Result<f64, McmcError> {
    let p = check_param(draws, name)?;
    if draws.chains() < 2 {
        return Err(McmcError::TooFewChains(draws.chains()));
    }
    let halves = split_halves(draws, p);
    let n = halves[0].len();
    if n < 2 {
        return Err(McmcError::TooFewDraws { need: 4, got: draws.iters_per_chain() });
    }
    check_not_constant(&halves, name)?;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = halves.iter().map(|c| sample_variance(c)).collect();
    let b = n as f64 * sample_variance(&means);
    let w = mean(&vars);
    if w <= 0.0 {
        return Err(McmcError::ConstantChain(name.to_string()));
    }
    Ok(((b / w + n as f64 - 1.0) / n as f64).sqrt())
}

/// Autocovariance sequence of one chain, biased (1/n) normalisation.
fn autocovariance(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    (0..n)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Effective sample size of the named parameter across split chains.
///
/// Truncates the pooled autocorrelation sum with Geyer's initial positive
/// sequence, enforces initial monotonicity, and caps the estimate at
/// `total · log10(total)`.
pub fn ess(draws: &PosteriorDraws, name: &str) -> Result<f64, McmcError> {
    let p = check_param(draws, name)?;
    let halves = split_halves(draws, p);
    let n = halves[0].len();
    if n < 4 {
        return Err(McmcError::TooFewDraws { need: 8, got: draws.iters_per_chain() });
    }
    check_not_constant(&halves, name)?;
    let m = halves.len();

    let acovs: Vec<Vec<f64>> = halves.iter().map(|c| autocovariance(c)).collect();
    let chain_means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> =
        acovs.iter().map(|a| a[0] * n as f64 / (n as f64 - 1.0)).collect();
    let mean_var = mean(&chain_vars);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += sample_variance(&chain_means);
    }
    if var_plus <= 0.0 {
        return Err(McmcError::ConstantChain(name.to_string()));
    }

    let mean_acov = |lag: usize| -> f64 { mean(&acovs.iter().map(|a| a[lag]).collect::<Vec<_>>()) };

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;

    // Geyer initial positive sequence: stop at the first negative pair.
    let mut s = 1;
    while s < n - 4 && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    // Bias correction term for antithetic chains.
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }

    // Geyer initial monotone sequence.
    let mut s = 1;
    while max_s >= 3 && s <= max_s - 3 {
        if rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s] {
            rho[s + 1] = (rho[s - 1] + rho[s]) / 2.0;
            rho[s + 2] = rho[s + 1];
        }
        s += 2;
    }

    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho.iter().take(max_s).sum::<f64>() + rho[max_s + 1];
    Ok((total / tau).min(total * total.log10()))
}

/// Diagnostics for every parameter; `accept_rates` are per parameter in
/// draw order. R-hat above [`RHAT_WARN`] adds a warning entry.
pub fn compute(draws: &PosteriorDraws, accept_rates: &[f64]) -> Result<Diagnostics, McmcError> {
    if accept_rates.len() != draws.names().len() {
        return Err(McmcError::Shape(format!(
            "expected {} acceptance rates, found {}",
            draws.names().len(),
            accept_rates.len()
        )));
    }
    let mut params = BTreeMap::new();
    let mut warnings = Vec::new();
    for (p, name) in draws.names().iter().enumerate() {
        let rhat = split_rhat(draws, name)?;
        let ess = ess(draws, name)?;
        if rhat > RHAT_WARN {
            warnings.push(format!("rhat({name}) = {rhat:.4} exceeds {RHAT_WARN}"));
        }
        params.insert(
            name.clone(),
            ParamDiagnostics { rhat, ess, accept_rate: accept_rates[p] },
        );
    }
    Ok(Diagnostics { params, warnings })
}
