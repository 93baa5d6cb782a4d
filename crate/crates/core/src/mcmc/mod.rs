//! Adaptive random-walk Metropolis sampling.
//!
//! The engine runs several independent chains of coordinate-wise
//! random-walk Metropolis over an unconstrained parameterisation. Positive
//! parameters are sampled on the log scale ([`Transform::LogPositive`])
//! with the change-of-variables Jacobian folded into the target, so
//! callers write their log density directly on the natural scale.
//!
//! Per-coordinate proposal step sizes adapt during warmup in batches of
//! [`McmcConfig::adapt_window`] sweeps, nudging each log step size toward
//! the coordinate-wise acceptance target (0.44 by default, the standard
//! value for one-dimensional random-walk updates). Step sizes freeze when
//! warmup ends, which keeps the kept draws a valid Markov chain.
//!
//! Each chain draws from its own named substream of the configured seed
//! (see [`crate::rng`]), chains are merged in chain order, and the whole
//! run is reproducible byte for byte.

pub mod diagnostics;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream_rng, RunRng};
use diagnostics::Diagnostics;

/// Sampling and diagnostics errors.
#[derive(Debug, Error)]
pub enum McmcError {
    /// Configuration failed validation.
    #[error("invalid mcmc config: {0}")]
    InvalidConfig(String),
    /// `init` length does not match the parameter list.
    #[error("expected {expected} initial values, found {found}")]
    InitLength { expected: usize, found: usize },
    /// Positive-constrained parameters need strictly positive starts.
    #[error("initial value {value} for positive parameter {name:?} must be > 0")]
    NonPositiveInit { name: String, value: f64 },
    /// The target must be finite at the initial point.
    #[error("log target not finite at the initial point")]
    NonFiniteInit,
    /// Every warmup proposal for one coordinate was rejected.
    #[error("chain {chain}: all warmup proposals for {name:?} rejected (step size collapse)")]
    StepSizeCollapse { chain: usize, name: String },
    /// Name not present in the draw set.
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    /// Draw matrices must contain only finite values.
    #[error("non-finite draw for parameter {name:?}")]
    NonFiniteDraw { name: String },
    /// Shape or length mismatch when assembling draws.
    #[error("draw shape mismatch: {0}")]
    Shape(String),
    /// Split R-hat needs at least two chains.
    #[error("diagnostics need at least 2 chains, got {0}")]
    TooFewChains(usize),
    /// ESS needs at least four draws per split chain.
    #[error("diagnostics need at least {need} draws per chain, got {got}")]
    TooFewDraws { need: usize, got: usize },
    /// Constant chains carry no sampling information.
    #[error("draws for parameter {0:?} are constant; diagnostics undefined")]
    ConstantChain(String),
    /// Row-mapping closure returned the wrong number of values.
    #[error("row map produced {found} values, expected {expected}")]
    RowMapLength { expected: usize, found: usize },
}

/// Support transform of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Parameter already lives on the whole real line.
    Identity,
    /// Strictly positive parameter, sampled as its logarithm.
    LogPositive,
}

/// One named parameter with its support transform.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub transform: Transform,
}

impl Param {
    /// Strictly positive parameter.
    pub fn positive(name: impl Into<String>) -> Self {
        Param { name: name.into(), transform: Transform::LogPositive }
    }

    /// Unconstrained real parameter.
    pub fn unconstrained(name: impl Into<String>) -> Self {
        Param { name: name.into(), transform: Transform::Identity }
    }
}

/// Sampler configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Independent chains; at least 2 so split R-hat is defined.
    pub chains: usize,
    /// Adaptation sweeps discarded before collection.
    pub warmup_iters: usize,
    /// Kept sweeps per chain.
    pub keep_iters: usize,
    /// Coordinate-wise acceptance target during adaptation.
    pub target_accept: f64,
    /// Sweeps per adaptation batch.
    pub adapt_window: usize,
    /// Root seed of the run; each chain derives its own substream.
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            warmup_iters: 2000,
            keep_iters: 5000,
            target_accept: 0.44,
            adapt_window: 50,
            seed: 0,
        }
    }
}

impl McmcConfig {
    /// Checks the configuration invariants.
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.chains < 2 {
            return Err(McmcError::InvalidConfig(format!(
                "chains must be >= 2, got {}",
                self.chains
            )));
        }
        if self.keep_iters < 100 {
            return Err(McmcError::InvalidConfig(format!(
                "keep_iters must be >= 100 for diagnostics, got {}",
                self.keep_iters
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(McmcError::InvalidConfig(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.adapt_window == 0 {
            return Err(McmcError::InvalidConfig("adapt_window must be >= 1".into()));
        }
        Ok(())
    }

    /// Same configuration with a different seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Posterior draws for a fixed parameter list, stored per chain.
///
/// Values live on the constrained (natural) scale. Draw order within a
/// chain is the order of collection, and chains keep the order they were
/// configured with, so any two runs with equal seeds produce equal draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    chains: usize,
    iters_per_chain: usize,
    /// Row-major: `((chain * iters) + iter) * params + param`.
    values: Vec<f64>,
}

impl PosteriorDraws {
    /// Assembles draws from a flat value matrix.
    pub fn new(
        names: Vec<String>,
        chains: usize,
        iters_per_chain: usize,
        values: Vec<f64>,
    ) -> Result<Self, McmcError> {
        if names.is_empty() {
            return Err(McmcError::Shape("parameter list is empty".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[i + 1..].contains(a) {
                return Err(McmcError::Shape(format!("duplicate parameter name {a:?}")));
            }
        }
        if chains == 0 || iters_per_chain == 0 {
            return Err(McmcError::Shape("need at least one chain and one draw".into()));
        }
        let expect = chains * iters_per_chain * names.len();
        if values.len() != expect {
            return Err(McmcError::Shape(format!(
                "expected {expect} values ({chains} chains x {iters_per_chain} draws x {} params), found {}",
                names.len(),
                values.len()
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(McmcError::NonFiniteDraw {
                    name: names[idx % names.len()].clone(),
                });
            }
        }
        Ok(PosteriorDraws { names, chains, iters_per_chain, values })
    }

    /// Parameter names in storage order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of chains.
    pub fn chains(&self) -> usize {
        self.chains
    }

    /// Kept draws per chain.
    pub fn iters_per_chain(&self) -> usize {
        self.iters_per_chain
    }

    /// Total draws across chains.
    pub fn total_draws(&self) -> usize {
        self.chains * self.iters_per_chain
    }

    /// Storage index of `name`.
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Value of parameter `p` at (0-based) `chain`, `iter`.
    ///
    /// Panics when an index is out of range; use the shape accessors to
    /// stay in bounds.
    pub fn value(&self, chain: usize, iter: usize, p: usize) -> f64 {
        assert!(chain < self.chains && iter < self.iters_per_chain && p < self.names.len());
        self.values[((chain * self.iters_per_chain) + iter) * self.names.len() + p]
    }

    /// One draw row (all parameters) at `chain`, `iter`.
    pub fn row(&self, chain: usize, iter: usize) -> &[f64] {
        assert!(chain < self.chains && iter < self.iters_per_chain);
        let d = self.names.len();
        let at = ((chain * self.iters_per_chain) + iter) * d;
        &self.values[at..at + d]
    }

    /// All draws of parameter `p` in chain `chain`, in draw order.
    pub fn chain_column(&self, chain: usize, p: usize) -> Vec<f64> {
        (0..self.iters_per_chain).map(|t| self.value(chain, t, p)).collect()
    }

    /// All draws of parameter `p`, chains concatenated in order.
    pub fn flat_column(&self, p: usize) -> Vec<f64> {
        (0..self.chains)
            .flat_map(|c| (0..self.iters_per_chain).map(move |t| (c, t)))
            .map(|(c, t)| self.value(c, t, p))
            .collect()
    }

    /// All draws of the named parameter, chains concatenated in order.
    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>, McmcError> {
        let p = self.param_index(name).ok_or_else(|| McmcError::UnknownParam(name.into()))?;
        Ok(self.flat_column(p))
    }

    /// Posterior mean of the named parameter.
    pub fn mean_of(&self, name: &str) -> Result<f64, McmcError> {
        let col = self.column_by_name(name)?;
        Ok(col.iter().sum::<f64>() / col.len() as f64)
    }

    /// Applies `f` to every draw row, producing a new draw set with
    /// `new_names`. Used to push draws through deterministic
    /// reparameterisations.
    pub fn map_rows(
        &self,
        new_names: Vec<String>,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<PosteriorDraws, McmcError> {
        let d_new = new_names.len();
        let mut values = Vec::with_capacity(self.total_draws() * d_new);
        for c in 0..self.chains {
            for t in 0..self.iters_per_chain {
                let out = f(self.row(c, t));
                if out.len() != d_new {
                    return Err(McmcError::RowMapLength { expected: d_new, found: out.len() });
                }
                values.extend_from_slice(&out);
            }
        }
        PosteriorDraws::new(new_names, self.chains, self.iters_per_chain, values)
    }

    /// `(chain, iter)` coordinates of `count` rows spread evenly across
    /// the whole run (all rows when `count` exceeds the total).
    pub fn thinned_rows(&self, count: usize) -> Vec<(usize, usize)> {
        let total = self.total_draws();
        let take = count.min(total);
        (0..take)
            .map(|j| {
                let idx = j * total / take.max(1);
                (idx / self.iters_per_chain, idx % self.iters_per_chain)
            })
            .collect()
    }
}

/// Draws plus their convergence diagnostics.
#[derive(Debug, Clone)]
pub struct McmcRun {
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
}

/// Result of one chain: constrained draws plus acceptance counts.
struct ChainOutput {
    values: Vec<f64>,
    keep_accepts: Vec<u64>,
}

/// Random-walk Metropolis state of one chain.
struct ChainState<'a, F> {
    log_target: &'a F,
    transforms: &'a [Transform],
    z: Vec<f64>,
    lp: f64,
    log_step: Vec<f64>,
    rng: RunRng,
}

/// Constrained values for unconstrained coordinates `z`.
fn constrain(transforms: &[Transform], z: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(transforms)
        .map(|(&zi, tr)| match tr {
            Transform::Identity => zi,
            Transform::LogPositive => zi.exp(),
        })
        .collect()
}

/// Log target on the unconstrained scale, Jacobian included.
fn log_target_u<F: Fn(&[f64]) -> f64>(log_target: &F, transforms: &[Transform], z: &[f64]) -> f64 {
    let x = constrain(transforms, z);
    let mut lp = log_target(&x);
    for (zi, tr) in z.iter().zip(transforms) {
        if *tr == Transform::LogPositive {
            lp += zi;
        }
    }
    lp
}

impl<'a, F: Fn(&[f64]) -> f64> ChainState<'a, F> {
    /// One Metropolis update of coordinate `dim`; true when accepted.
    fn update_coord(&mut self, dim: usize) -> bool {
        let old = self.z[dim];
        let eps: f64 = self.rng.sample(StandardNormal);
        self.z[dim] = old + self.log_step[dim].exp() * eps;
        let lpp = log_target_u(self.log_target, self.transforms, &self.z);
        // Non-finite proposals are rejected outright; NaN compares false.
        let accept = lpp.is_finite() && self.rng.random::<f64>().ln() < lpp - self.lp;
        if accept {
            self.lp = lpp;
        } else {
            self.z[dim] = old;
        }
        accept
    }
}

const LOG_STEP_MIN: f64 = -12.0;
const LOG_STEP_MAX: f64 = 6.0;
const INITIAL_STEP: f64 = 0.5;

fn run_chain<F: Fn(&[f64]) -> f64>(
    log_target: &F,
    params: &[Param],
    z0: &[f64],
    cfg: &McmcConfig,
    chain_idx: usize,
) -> Result<ChainOutput, McmcError> {
    let d = params.len();
    let transforms: Vec<Transform> = params.iter().map(|p| p.transform).collect();
    let rng = substream_rng(cfg.seed, &format!("chain-{chain_idx}"));
    let lp0 = log_target_u(log_target, &transforms, z0);
    if !lp0.is_finite() {
        return Err(McmcError::NonFiniteInit);
    }
    let mut state = ChainState {
        log_target,
        transforms: &transforms,
        z: z0.to_vec(),
        lp: lp0,
        log_step: vec![INITIAL_STEP.ln(); d],
        rng,
    };

    let mut warmup_accepts = vec![0u64; d];
    let mut batch_accepts = vec![0u64; d];
    let mut batch = 0usize;
    for sweep in 1..=cfg.warmup_iters {
        for dim in 0..d {
            if state.update_coord(dim) {
                warmup_accepts[dim] += 1;
                batch_accepts[dim] += 1;
            }
        }
        if sweep % cfg.adapt_window == 0 {
            batch += 1;
            // Proportional nudge toward the acceptance target; the gain
            // decays so late batches only fine-tune.
            let gain = (4.0 / (batch as f64).sqrt()).min(1.0);
            for dim in 0..d {
                let rate = batch_accepts[dim] as f64 / cfg.adapt_window as f64;
                let nudged = state.log_step[dim] + gain * (rate - cfg.target_accept);
                state.log_step[dim] = nudged.clamp(LOG_STEP_MIN, LOG_STEP_MAX);
                batch_accepts[dim] = 0;
            }
        }
    }
    if cfg.warmup_iters > 0 {
        for dim in 0..d {
            if warmup_accepts[dim] == 0 {
                return Err(McmcError::StepSizeCollapse {
                    chain: chain_idx,
                    name: params[dim].name.clone(),
                });
            }
        }
    }

    let mut values = Vec::with_capacity(cfg.keep_iters * d);
    let mut keep_accepts = vec![0u64; d];
    for _ in 0..cfg.keep_iters {
        for dim in 0..d {
            if state.update_coord(dim) {
                keep_accepts[dim] += 1;
            }
        }
        values.extend(constrain(&transforms, &state.z));
    }
    Ok(ChainOutput { values, keep_accepts })
}

/// Draws from `log_target` with adaptive coordinate-wise random-walk
/// Metropolis.
///
/// `log_target` receives constrained (natural-scale) values and returns
/// the unnormalised log density; return `f64::NEG_INFINITY` outside the
/// support. `init` gives the constrained starting point shared by all
/// chains; the target must be finite there.
pub fn sample<F>(
    log_target: F,
    params: &[Param],
    init: &[f64],
    cfg: &McmcConfig,
) -> Result<McmcRun, McmcError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if init.len() != params.len() {
        return Err(McmcError::InitLength { expected: params.len(), found: init.len() });
    }
    let mut z0 = Vec::with_capacity(init.len());
    for (p, &x) in params.iter().zip(init) {
        match p.transform {
            Transform::Identity => z0.push(x),
            Transform::LogPositive => {
                if !(x > 0.0) {
                    return Err(McmcError::NonPositiveInit { name: p.name.clone(), value: x });
                }
                z0.push(x.ln());
            }
        }
    }

    let mut outputs: Vec<Option<Result<ChainOutput, McmcError>>> =
        (0..cfg.chains).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (idx, slot) in outputs.iter_mut().enumerate() {
            let z0 = &z0;
            let log_target = &log_target;
            handles.push(scope.spawn(move || {
                *slot = Some(run_chain(log_target, params, z0, cfg, idx));
            }));
        }
        for h in handles {
            // Chain threads only panic if the target itself panics.
            h.join().expect("mcmc chain thread panicked");
        }
    });

    let d = params.len();
    let mut values = Vec::with_capacity(cfg.chains * cfg.keep_iters * d);
    let mut keep_accepts = vec![0u64; d];
    for out in outputs {
        let out = out.expect("chain result missing")?;
        values.extend(out.values);
        for (tot, got) in keep_accepts.iter_mut().zip(&out.keep_accepts) {
            *tot += got;
        }
    }
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let draws = PosteriorDraws::new(names, cfg.chains, cfg.keep_iters, values)?;
    let denom = (cfg.chains * cfg.keep_iters) as f64;
    let accept_rates: Vec<f64> = keep_accepts.iter().map(|&a| a as f64 / denom).collect();
    let diagnostics = diagnostics::compute(&draws, &accept_rates)?;
    Ok(McmcRun { draws, diagnostics })
}
