//! Passenger pseudo waiting times: Gamma regression on interval-allocated
//! daily flow.
//!
//! A passenger requesting at time `t` departs with the first driver to
//! arrive after `max(t, previous departure)` (FIFO, one passenger per
//! driver). The pseudo wait `w_j = t′_j − max(t_j, t′_{j−1})` (with
//! `t′_0 = t_1`) measures the service headway a passenger actually
//! consumes, never exceeding the perceived wait `w*_j = t′_j − t_j`.
//!
//! Pseudo waits on day `i` in sub-daily interval `I_s` are modeled as
//! `w ~ Gamma(ν, rate = β_s · y_i)`, so the conditional mean is
//! `ν / (β_s y_i)`: more daily flow means shorter waits, with an
//! interval-specific intensity `β_s`. The likelihood factorises across
//! intervals; under the flat positive prior each `β_s` has the
//! closed-form marginal posterior `Gamma(ν n_s + 1, Σ y_i w_{i,j})`
//! ([`beta_conjugate_posterior`]), which doubles as an independent oracle
//! for the MCMC route ([`fit_wait_model`]). A Dirichlet prior mode
//! constrains `Σ β_s = 1` by stick-breaking reparameterisation.
//!
//! Prediction composes the two stages: [`predict_wait_given_flow`]
//! integrates over the `β_s` posterior at a known flow, and
//! [`predict_wait_marginal`] additionally integrates over posterior
//! predictive flow samples.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::calendar::CalendarError;
use crate::flow::{simulate_flow_daytypes, FlowError, FlowParams, FlowSeries};
use crate::mcmc::{self, McmcConfig, McmcError, Param, PosteriorDraws, Transform};
use crate::util::{mean, sample_variance};

/// Minimum empirical acceptance rate before truncated-wait conditioning
/// is declared infeasible.
pub const MIN_CONDITIONING_RATE: f64 = 1e-6;

/// Waiting-model errors.
#[derive(Debug, Error)]
pub enum WaitError {
    /// Interval count must divide the 1440-minute day evenly.
    #[error("interval count {0} must be >= 1 and divide 1440 evenly")]
    InvalidGrid(usize),
    /// Time outside `[0, 1440)` minutes.
    #[error("time {minute} min outside the day range [0, 1440)")]
    TimeOutOfDay { minute: f64 },
    /// Interval index outside `1..=S`.
    #[error("interval index {index} out of range 1..={count}")]
    IntervalOutOfRange { index: usize, count: usize },
    /// Request times must be strictly increasing within a day.
    #[error("{date}: request times must be strictly increasing at position {position}")]
    RequestsNotIncreasing { date: NaiveDate, position: usize },
    /// Event vectors must have matching lengths.
    #[error("expected {requests} arrivals to match requests, found {arrivals}")]
    EventLengthMismatch { requests: usize, arrivals: usize },
    /// A driver arrived before the passenger could depart.
    #[error("arrival {position} precedes max(request, previous departure) by {shortfall} min")]
    ArrivalBeforeService { position: usize, shortfall: f64 },
    /// Waits must be positive finite minutes.
    #[error("{date}: wait at position {position} must be a positive finite number, got {value}")]
    InvalidWait { date: NaiveDate, position: usize, value: f64 },
    /// Days must be sorted by date.
    #[error("day {date} out of order in request log")]
    DaysNotAscending { date: NaiveDate },
    /// Every logged day needs an observed flow.
    #[error("no observed flow for day {date}")]
    MissingFlow { date: NaiveDate },
    /// Daily flow must be positive to scale a Gamma rate.
    #[error("day {day}: flow {value} must be > 0 to form the Gamma rate")]
    NonPositiveFlowForWaits { day: usize, value: f64 },
    /// Gamma shape must be positive.
    #[error("gamma shape nu must be > 0, got {0}")]
    NonPositiveNu(f64),
    /// Beta vector length must match the grid.
    #[error("expected {expected} beta values (one per interval), found {found}")]
    BetaCount { expected: usize, found: usize },
    /// Beta values must be finite and non-negative.
    #[error("beta[{s}] must be finite and >= 0, got {value}")]
    InvalidBeta { s: usize, value: f64 },
    /// No observations in the interval: flat posterior is improper.
    #[error("interval {s} has no observations: posterior improper under the flat prior")]
    UnidentifiedInterval { s: usize },
    /// Posterior draw set lacks the requested interval's coefficient.
    #[error("draws lack a beta_{s} column; interval {s} unidentified, prediction refused")]
    MissingBetaColumn { s: usize },
    /// At least one draw is required.
    #[error("posterior or predictive draw set is empty")]
    EmptyDraws,
    /// Dirichlet concentration must be positive per interval.
    #[error("dirichlet alpha[{s}] must be > 0, got {value}")]
    InvalidDirichletAlpha { s: usize, value: f64 },
    /// Truncated conditioning rejected essentially every draw.
    #[error("conditioning on w > {zeta} accepted rate {rate:.2e} < 1e-6: infeasible")]
    InfeasibleConditioning { zeta: f64, rate: f64 },
    /// Gap parameter must be non-negative.
    #[error("inter-request gap zeta must be >= 0, got {0}")]
    NegativeZeta(f64),
    /// Moment estimation needs intervals with at least two observations.
    #[error("cannot estimate nu: no interval holds two or more observations")]
    NuEstimation,
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

/// Equal sub-daily intervals partitioning the 1440-minute day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalGrid {
    intervals: usize,
}

impl IntervalGrid {
    /// `count` intervals of `1440/count` minutes each.
    pub fn new(count: usize) -> Result<Self, WaitError> {
        if count == 0 || 1440 % count != 0 {
            return Err(WaitError::InvalidGrid(count));
        }
        Ok(IntervalGrid { intervals: count })
    }

    /// Number of intervals S.
    pub fn count(&self) -> usize {
        self.intervals
    }

    /// Interval width in minutes.
    pub fn width_minutes(&self) -> f64 {
        1440.0 / self.intervals as f64
    }

    /// 1-based interval holding `minute`; intervals are `[start, end)`.
    pub fn interval_of(&self, minute: f64) -> Result<usize, WaitError> {
        if !minute.is_finite() || minute < 0.0 || minute >= 1440.0 {
            return Err(WaitError::TimeOutOfDay { minute });
        }
        Ok((minute / self.width_minutes()) as usize + 1)
    }

    /// `[start, end)` bounds of interval `s` in minutes.
    pub fn bounds(&self, s: usize) -> Result<(f64, f64), WaitError> {
        if s == 0 || s > self.intervals {
            return Err(WaitError::IntervalOutOfRange { index: s, count: self.intervals });
        }
        let w = self.width_minutes();
        Ok(((s - 1) as f64 * w, s as f64 * w))
    }
}

/// Gamma regression parameters: shape ν and one rate coefficient per
/// interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitParams {
    nu: f64,
    beta: Vec<f64>,
}

impl WaitParams {
    /// Validates ν > 0 and finite non-negative β.
    pub fn new(nu: f64, beta: Vec<f64>) -> Result<Self, WaitError> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(WaitError::NonPositiveNu(nu));
        }
        for (j, &b) in beta.iter().enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(WaitError::InvalidBeta { s: j + 1, value: b });
            }
        }
        Ok(WaitParams { nu, beta })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// All interval coefficients in order.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Coefficient of 1-based interval `s`.
    pub fn beta_of(&self, s: usize) -> Result<f64, WaitError> {
        self.beta
            .get(s - 1)
            .copied()
            .ok_or(WaitError::IntervalOutOfRange { index: s, count: self.beta.len() })
    }
}

/// One day of passenger requests with their pseudo waits.
#[derive(Debug, Clone, PartialEq)]
pub struct DayWaits {
    pub date: NaiveDate,
    /// Request times, minutes since midnight, strictly increasing.
    pub request_minutes: Vec<f64>,
    /// Pseudo waits in minutes, aligned with requests.
    pub pseudo_waits: Vec<f64>,
    /// Driver arrival times when the source data carried them.
    pub arrivals: Option<Vec<f64>>,
    /// Perceived waits when derivable from arrivals.
    pub perceived: Option<Vec<f64>>,
}

/// Passenger request history across days, sorted by date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RequestLog {
    days: Vec<DayWaits>,
}

impl RequestLog {
    /// Validates ordering and wait positivity.
    pub fn new(days: Vec<DayWaits>) -> Result<Self, WaitError> {
        let mut prev: Option<NaiveDate> = None;
        for day in &days {
            if let Some(p) = prev {
                if day.date <= p {
                    return Err(WaitError::DaysNotAscending { date: day.date });
                }
            }
            prev = Some(day.date);
            if day.request_minutes.len() != day.pseudo_waits.len() {
                return Err(WaitError::EventLengthMismatch {
                    requests: day.request_minutes.len(),
                    arrivals: day.pseudo_waits.len(),
                });
            }
            for (j, pair) in day.request_minutes.windows(2).enumerate() {
                if !(pair[1] > pair[0]) {
                    return Err(WaitError::RequestsNotIncreasing {
                        date: day.date,
                        position: j + 2,
                    });
                }
            }
            for (j, &t) in day.request_minutes.iter().enumerate() {
                if !t.is_finite() || !(0.0..1440.0).contains(&t) {
                    return Err(WaitError::TimeOutOfDay { minute: t });
                }
                let w = day.pseudo_waits[j];
                if !w.is_finite() || w <= 0.0 {
                    return Err(WaitError::InvalidWait {
                        date: day.date,
                        position: j + 1,
                        value: w,
                    });
                }
            }
        }
        Ok(RequestLog { days })
    }

    /// Days in date order.
    pub fn days(&self) -> &[DayWaits] {
        &self.days
    }

    /// Total number of observed waits.
    pub fn total_observations(&self) -> usize {
        self.days.iter().map(|d| d.pseudo_waits.len()).sum()
    }

    /// Sub-log containing only days within `[from, to]` inclusive.
    pub fn restrict(&self, from: NaiveDate, to: NaiveDate) -> RequestLog {
        RequestLog {
            days: self.days.iter().filter(|d| d.date >= from && d.date <= to).cloned().collect(),
        }
    }
}

/// Pseudo and perceived waits computed from one day's event times.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWaits {
    pub pseudo: Vec<f64>,
    pub perceived: Vec<f64>,
}

/// Converts FIFO request/arrival times into pseudo and perceived waits.
///
/// `w_j = t′_j − max(t_j, t′_{j−1})` with `t′_0 = t_1`, and
/// `w*_j = t′_j − t_j`. Errors when an arrival does not strictly follow
/// the time its passenger becomes serviceable.
pub fn pseudo_waits_from_events(
    requests: &[f64],
    arrivals: &[f64],
) -> Result<EventWaits, WaitError> {
    if requests.len() != arrivals.len() {
        return Err(WaitError::EventLengthMismatch {
            requests: requests.len(),
            arrivals: arrivals.len(),
        });
    }
    if requests.is_empty() {
        return Ok(EventWaits { pseudo: Vec::new(), perceived: Vec::new() });
    }
    for (j, pair) in requests.windows(2).enumerate() {
        if !(pair[1] > pair[0]) {
            return Err(WaitError::RequestsNotIncreasing {
                date: NaiveDate::MIN,
                position: j + 2,
            });
        }
    }
    let mut pseudo = Vec::with_capacity(requests.len());
    let mut perceived = Vec::with_capacity(requests.len());
    let mut prev_departure = requests[0];
    for (j, (&t, &t_prime)) in requests.iter().zip(arrivals).enumerate() {
        let serviceable = t.max(prev_departure);
        let w = t_prime - serviceable;
        if !(w > 0.0) || !w.is_finite() {
            return Err(WaitError::ArrivalBeforeService { position: j + 1, shortfall: -w });
        }
        pseudo.push(w);
        perceived.push(t_prime - t);
        prev_departure = t_prime;
    }
    Ok(EventWaits { pseudo, perceived })
}

/// Per-interval sufficient statistics of the Gamma regression.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalStats {
    /// Observation count n_s.
    pub n: usize,
    /// Σ y_i · w_{i,j}: the conjugate posterior rate.
    pub sum_yw: f64,
    /// Σ log w_{i,j}.
    pub sum_log_w: f64,
    /// Σ log y_i over observations in the interval.
    pub sum_log_y: f64,
}

/// Collects per-interval sufficient statistics, validating that every
/// logged day has a positive observed flow.
pub fn collect_interval_stats(
    flows: &FlowSeries,
    log: &RequestLog,
    grid: &IntervalGrid,
) -> Result<Vec<IntervalStats>, WaitError> {
    let mut stats = vec![IntervalStats::default(); grid.count()];
    for day in log.days() {
        let i = flows
            .calendar()
            .index_of(day.date)
            .ok_or(WaitError::MissingFlow { date: day.date })?;
        let y = flows.flow(i)?;
        for (&t, &w) in day.request_minutes.iter().zip(&day.pseudo_waits) {
            let s = grid.interval_of(t)?;
            let slot = &mut stats[s - 1];
            slot.n += 1;
            slot.sum_yw += y * w;
            slot.sum_log_w += w.ln();
            slot.sum_log_y += y.ln();
        }
    }
    Ok(stats)
}

fn log_likelihood_from_stats(nu: f64, beta: &[f64], stats: &[IntervalStats]) -> f64 {
    let mut total = 0.0;
    for (slot, &b) in stats.iter().zip(beta) {
        if slot.n == 0 {
            continue;
        }
        if b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let n = slot.n as f64;
        total += nu * (n * b.ln() + slot.sum_log_y) - n * ln_gamma(nu)
            + (nu - 1.0) * slot.sum_log_w
            - b * slot.sum_yw;
    }
    total
}

/// Log-likelihood of the observed waits:
/// `Σ ν·log(β_s y_i) − logΓ(ν) + (ν−1)·log w − β_s y_i w` over all
/// observations. Returns `−∞` when any interval with data has `β_s = 0`.
pub fn wait_log_likelihood(
    params: &WaitParams,
    flows: &FlowSeries,
    log: &RequestLog,
    grid: &IntervalGrid,
) -> Result<f64, WaitError> {
    if params.beta.len() != grid.count() {
        return Err(WaitError::BetaCount { expected: grid.count(), found: params.beta.len() });
    }
    let stats = collect_interval_stats(flows, log, grid)?;
    Ok(log_likelihood_from_stats(params.nu, &params.beta, &stats))
}

/// Prior over the interval coefficients β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaPrior {
    /// Flat (Lebesgue) prior on ℝ₊^S; the default.
    FlatPositive,
    /// Dirichlet(α) prior constraining Σ β_s = 1.
    Dirichlet { alpha: Vec<f64> },
}

impl Default for BetaPrior {
    fn default() -> Self {
        BetaPrior::FlatPositive
    }
}

impl BetaPrior {
    fn validate(&self, intervals: usize) -> Result<(), WaitError> {
        if let BetaPrior::Dirichlet { alpha } = self {
            if alpha.len() != intervals {
                return Err(WaitError::BetaCount { expected: intervals, found: alpha.len() });
            }
            for (j, &a) in alpha.iter().enumerate() {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(WaitError::InvalidDirichletAlpha { s: j + 1, value: a });
                }
            }
        }
        Ok(())
    }
}

/// Unnormalised log-posterior of a raw β vector (ν fixed).
///
/// Flat mode equals the log-likelihood on the positive orthant and is
/// `−∞` outside it; the Dirichlet mode adds `Σ (α_s − 1) log β_s` (the
/// simplex constraint itself is handled by the sampler's
/// reparameterisation, not here).
pub fn beta_log_posterior(
    nu: f64,
    beta: &[f64],
    flows: &FlowSeries,
    log: &RequestLog,
    grid: &IntervalGrid,
    prior: &BetaPrior,
) -> Result<f64, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    if beta.len() != grid.count() {
        return Err(WaitError::BetaCount { expected: grid.count(), found: beta.len() });
    }
    prior.validate(grid.count())?;
    if beta.iter().any(|&b| b < 0.0 || !b.is_finite()) {
        return Ok(f64::NEG_INFINITY);
    }
    let stats = collect_interval_stats(flows, log, grid)?;
    let ll = log_likelihood_from_stats(nu, beta, &stats);
    match prior {
        BetaPrior::FlatPositive => Ok(ll),
        BetaPrior::Dirichlet { alpha } => {
            let mut lp = ll;
            for (&b, &a) in beta.iter().zip(alpha) {
                if b <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                lp += (a - 1.0) * b.ln();
            }
            Ok(lp)
        }
    }
}

/// A Gamma distribution in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPosterior {
    /// Posterior mean `shape / rate`.
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Posterior variance `shape / rate²`.
    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }
}

/// Exact marginal posterior of `β_s` under the flat prior:
/// `Gamma(ν·n_s + 1, Σ y_i w_{i,j})`. Errors when the interval holds no
/// observations (improper posterior).
pub fn beta_conjugate_posterior(
    nu: f64,
    flows: &FlowSeries,
    log: &RequestLog,
    grid: &IntervalGrid,
    s: usize,
) -> Result<GammaPosterior, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    if s == 0 || s > grid.count() {
        return Err(WaitError::IntervalOutOfRange { index: s, count: grid.count() });
    }
    let stats = collect_interval_stats(flows, log, grid)?;
    let slot = stats[s - 1];
    if slot.n == 0 {
        return Err(WaitError::UnidentifiedInterval { s });
    }
    Ok(GammaPosterior { shape: nu * slot.n as f64 + 1.0, rate: slot.sum_yw })
}

/// Day-by-interval matrix of simulated waits.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitMatrix {
    days: usize,
    intervals: usize,
    values: Vec<f64>,
}

impl WaitMatrix {
    pub fn days(&self) -> usize {
        self.days
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Wait of day `i`, interval `s` (both 1-based).
    pub fn get(&self, i: usize, s: usize) -> f64 {
        assert!(i >= 1 && i <= self.days && s >= 1 && s <= self.intervals);
        self.values[(i - 1) * self.intervals + (s - 1)]
    }

    /// All values in day-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Output of the two-stage wait simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitSim {
    /// Daily flows, drawn once and shared by every replicate.
    pub flows: Vec<f64>,
    /// J replicate matrices, each days × intervals.
    pub replicates: Vec<WaitMatrix>,
}

/// Simulates daily flows once (day-type dispatch), then J replicate
/// matrices of waits `W[i,s] ~ Gamma(ν, β_s · Y[i])`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_waits<R: Rng>(
    calendar: &crate::calendar::ServiceCalendar,
    flow_params: &FlowParams,
    order: usize,
    init_mean: f64,
    nu: f64,
    beta: &[f64],
    replicates: usize,
    grid: &IntervalGrid,
    rng: &mut R,
) -> Result<WaitSim, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    if beta.len() != grid.count() {
        return Err(WaitError::BetaCount { expected: grid.count(), found: beta.len() });
    }
    for (j, &b) in beta.iter().enumerate() {
        if !(b > 0.0) || !b.is_finite() {
            return Err(WaitError::InvalidBeta { s: j + 1, value: b });
        }
    }
    let flows = simulate_flow_daytypes(calendar, flow_params, order, init_mean, rng)?;
    let out = waits_given_flows(&flows, nu, beta, replicates, grid, rng)?;
    Ok(WaitSim { flows, replicates: out })
}

/// Draws J replicate wait matrices for fixed daily flows:
/// `W[i,s] ~ Gamma(ν, β_s · y_i)`. Flows must all be positive.
pub fn waits_given_flows<R: Rng>(
    flows: &[f64],
    nu: f64,
    beta: &[f64],
    replicates: usize,
    grid: &IntervalGrid,
    rng: &mut R,
) -> Result<Vec<WaitMatrix>, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    if beta.len() != grid.count() {
        return Err(WaitError::BetaCount { expected: grid.count(), found: beta.len() });
    }
    for (j, &b) in beta.iter().enumerate() {
        if !(b > 0.0) || !b.is_finite() {
            return Err(WaitError::InvalidBeta { s: j + 1, value: b });
        }
    }
    for (day, &y) in flows.iter().enumerate() {
        if !(y > 0.0) || !y.is_finite() {
            return Err(WaitError::NonPositiveFlowForWaits { day: day + 1, value: y });
        }
    }
    let days = flows.len();
    let s_count = grid.count();
    let mut out = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut values = Vec::with_capacity(days * s_count);
        for &y in flows {
            for &b in beta {
                let dist = Gamma::new(nu, 1.0 / (b * y)).expect("validated gamma");
                values.push(dist.sample(rng));
            }
        }
        out.push(WaitMatrix { days, intervals: s_count, values });
    }
    Ok(out)
}

fn beta_column(draws: &PosteriorDraws, s: usize) -> Result<Vec<f64>, WaitError> {
    if draws.total_draws() == 0 {
        return Err(WaitError::EmptyDraws);
    }
    draws
        .column_by_name(&format!("beta_{s}"))
        .map_err(|_| WaitError::MissingBetaColumn { s })
}

/// Posterior predictive waits at a known flow `y_tilde`: one
/// `Gamma(ν, β_s·ỹ)` draw per retained `β_s` draw.
pub fn predict_wait_given_flow<R: Rng>(
    draws: &PosteriorDraws,
    nu: f64,
    y_tilde: f64,
    s: usize,
    rng: &mut R,
) -> Result<Vec<f64>, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    if !(y_tilde > 0.0) {
        return Err(WaitError::NonPositiveFlowForWaits { day: 0, value: y_tilde });
    }
    let betas = beta_column(draws, s)?;
    let mut out = Vec::with_capacity(betas.len());
    for b in betas {
        let dist = Gamma::new(nu, 1.0 / (b * y_tilde))
            .map_err(|_| WaitError::InvalidBeta { s, value: b })?;
        out.push(dist.sample(rng));
    }
    Ok(out)
}

/// Marginal posterior predictive waits: pairs the j-th `β_s` draw with
/// the j-th predictive flow sample and emits one `Gamma(ν, β_s·ỹ)` draw
/// per pair. Output length is the smaller of the two input sizes.
pub fn predict_wait_marginal<R: Rng>(
    draws: &PosteriorDraws,
    nu: f64,
    flow_predictive: &[f64],
    s: usize,
    rng: &mut R,
) -> Result<Vec<f64>, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    if flow_predictive.is_empty() {
        return Err(WaitError::EmptyDraws);
    }
    let betas = beta_column(draws, s)?;
    let n = betas.len().min(flow_predictive.len());
    let mut out = Vec::with_capacity(n);
    for (b, &y) in betas.into_iter().zip(flow_predictive).take(n) {
        if !(y > 0.0) {
            return Err(WaitError::NonPositiveFlowForWaits { day: 0, value: y });
        }
        let dist = Gamma::new(nu, 1.0 / (b * y))
            .map_err(|_| WaitError::InvalidBeta { s, value: b })?;
        out.push(dist.sample(rng));
    }
    Ok(out)
}

/// Perceived-wait samples for a second passenger: `w₂* = w₂ + (w₁ − ζ)`
/// conditioned on `w₁ > ζ`, with the first passenger's excess resampled
/// independently for every `w₂` draw.
///
/// Errors when the empirical acceptance rate of `w₁ > ζ` falls below
/// [`MIN_CONDITIONING_RATE`].
pub fn perceived_from_pseudo<R: Rng>(
    w1_draws: &[f64],
    w2_draws: &[f64],
    zeta: f64,
    rng: &mut R,
) -> Result<Vec<f64>, WaitError> {
    if !(zeta >= 0.0) {
        return Err(WaitError::NegativeZeta(zeta));
    }
    if w1_draws.is_empty() || w2_draws.is_empty() {
        return Err(WaitError::EmptyDraws);
    }
    let accepted: Vec<f64> = w1_draws.iter().copied().filter(|&w| w > zeta).collect();
    let rate = accepted.len() as f64 / w1_draws.len() as f64;
    if rate < MIN_CONDITIONING_RATE {
        return Err(WaitError::InfeasibleConditioning { zeta, rate });
    }
    Ok(w2_draws
        .iter()
        .map(|&w2| w2 + accepted[rng.random_range(0..accepted.len())] - zeta)
        .collect())
}

/// Method-of-moments estimate of the Gamma shape ν.
///
/// Within interval `s`, `z = y_i·w_{i,j} ~ Gamma(ν, β_s)` independently
/// of `i`, so `mean(z)²/var(z)` estimates ν without knowing `β_s`.
/// Per-interval estimates (intervals with ≥ 2 observations) are pooled
/// by observation-count weights.
pub fn estimate_nu_moments(
    flows: &FlowSeries,
    log: &RequestLog,
    grid: &IntervalGrid,
) -> Result<f64, WaitError> {
    let mut z_per_interval: Vec<Vec<f64>> = vec![Vec::new(); grid.count()];
    for day in log.days() {
        let i = flows
            .calendar()
            .index_of(day.date)
            .ok_or(WaitError::MissingFlow { date: day.date })?;
        let y = flows.flow(i)?;
        for (&t, &w) in day.request_minutes.iter().zip(&day.pseudo_waits) {
            let s = grid.interval_of(t)?;
            z_per_interval[s - 1].push(y * w);
        }
    }
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut per_interval = Vec::new();
    for (j, zs) in z_per_interval.iter().enumerate() {
        if zs.len() < 2 {
            continue;
        }
        let v = sample_variance(zs);
        if v <= 0.0 {
            continue;
        }
        let m = mean(zs);
        let nu_s = m * m / v;
        per_interval.push((j + 1, nu_s, zs.len()));
        weighted += nu_s * zs.len() as f64;
        weight += zs.len() as f64;
    }
    if weight == 0.0 {
        return Err(WaitError::NuEstimation);
    }
    let nu = weighted / weight;
    log::info!(
        "moment-matched nu = {nu:.4} from {} intervals: {:?}",
        per_interval.len(),
        per_interval
            .iter()
            .map(|(s, v, n)| format!("I{s}: {v:.3} (n={n})"))
            .collect::<Vec<_>>()
    );
    Ok(nu)
}

/// Result of a β posterior fit.
#[derive(Debug, Clone)]
pub struct WaitFit {
    /// Draws with one `beta_{s}` column per sampled interval.
    pub draws: PosteriorDraws,
    pub diagnostics: mcmc::diagnostics::Diagnostics,
    /// Shape ν the fit was run at.
    pub nu: f64,
    /// 1-based intervals with observations.
    pub identified: Vec<usize>,
    /// 1-based intervals without observations. Under the flat prior these
    /// are excluded from sampling; under the Dirichlet prior they stay in
    /// the simplex and are informed by the prior alone.
    pub unidentified: Vec<usize>,
}

/// Numerically stable `log(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Stick-breaking map from `z ∈ ℝ^{S−1}` to the interior of the simplex,
/// returning `(β, log|Jacobian|)`. `z = 0` maps to the uniform simplex.
fn stick_break(z: &[f64]) -> (Vec<f64>, f64) {
    let s = z.len() + 1;
    let mut beta = Vec::with_capacity(s);
    let mut remaining = 1.0_f64;
    let mut log_jac = 0.0;
    for (k, &zk) in z.iter().enumerate() {
        let u = zk - ((s - k - 1) as f64).ln();
        // log v and log(1−v) for v = sigmoid(u), computed stably.
        let log_v = -softplus(-u);
        let log_1mv = -softplus(u);
        let v = log_v.exp();
        log_jac += log_v + log_1mv + remaining.ln();
        beta.push(v * remaining);
        remaining *= log_1mv.exp();
    }
    beta.push(remaining);
    (beta, log_jac)
}

/// Fits the β posterior by MCMC at fixed ν.
///
/// Flat prior: each identified interval's `β_s` is sampled independently
/// on the log scale; unidentified intervals are excluded and reported.
/// Dirichlet prior: the full simplex is sampled through a stick-breaking
/// reparameterisation and every interval gets a `beta_{s}` column.
pub fn fit_wait_model(
    flows: &FlowSeries,
    log: &RequestLog,
    grid: &IntervalGrid,
    nu: f64,
    prior: &BetaPrior,
    cfg: &McmcConfig,
) -> Result<WaitFit, WaitError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(WaitError::NonPositiveNu(nu));
    }
    prior.validate(grid.count())?;
    let stats = collect_interval_stats(flows, log, grid)?;
    let identified: Vec<usize> =
        (1..=grid.count()).filter(|&s| stats[s - 1].n > 0).collect();
    let unidentified: Vec<usize> =
        (1..=grid.count()).filter(|&s| stats[s - 1].n == 0).collect();
    if identified.is_empty() {
        return Err(WaitError::UnidentifiedInterval { s: 1 });
    }

    match prior {
        BetaPrior::FlatPositive => {
            let params: Vec<Param> =
                identified.iter().map(|s| Param::positive(format!("beta_{s}"))).collect();
            // Conjugate posterior means are exact starting points.
            let init: Vec<f64> = identified
                .iter()
                .map(|&s| {
                    let slot = stats[s - 1];
                    (nu * slot.n as f64 + 1.0) / slot.sum_yw
                })
                .collect();
            let active: Vec<IntervalStats> =
                identified.iter().map(|&s| stats[s - 1]).collect();
            let target = move |b: &[f64]| -> f64 {
                let mut lp = 0.0;
                for (slot, &beta) in active.iter().zip(b) {
                    if beta <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let n = slot.n as f64;
                    lp += nu * n * beta.ln() - beta * slot.sum_yw;
                }
                lp
            };
            let run = mcmc::sample(target, &params, &init, cfg)?;
            Ok(WaitFit {
                draws: run.draws,
                diagnostics: run.diagnostics,
                nu,
                identified,
                unidentified,
            })
        }
        BetaPrior::Dirichlet { alpha } => {
            let s_count = grid.count();
            let params: Vec<Param> = (1..s_count)
                .map(|k| Param::unconstrained(format!("stick_{k}")))
                .collect();
            let init = vec![0.0; s_count - 1];
            let alpha = alpha.clone();
            let stats_c = stats.clone();
            let target = move |z: &[f64]| -> f64 {
                let (beta, log_jac) = stick_break(z);
                let mut lp = log_likelihood_from_stats(nu, &beta, &stats_c) + log_jac;
                for (&b, &a) in beta.iter().zip(&alpha) {
                    if b <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    lp += (a - 1.0) * b.ln();
                }
                lp
            };
            let run = mcmc::sample(target, &params, &init, cfg)?;
            let names: Vec<String> = (1..=s_count).map(|s| format!("beta_{s}")).collect();
            let beta_draws = run.draws.map_rows(names, |z| stick_break(z).0)?;
            // Engine acceptance lives in stick space; report its mean on
            // every transformed coordinate.
            let mean_accept = run
                .diagnostics
                .params
                .values()
                .map(|p| p.accept_rate)
                .sum::<f64>()
                / run.diagnostics.params.len() as f64;
            let rates = vec![mean_accept; s_count];
            let diagnostics = mcmc::diagnostics::compute(&beta_draws, &rates)?;
            Ok(WaitFit { draws: beta_draws, diagnostics, nu, identified, unidentified })
        }
    }
}

/// Transform declarations for the flat-prior fit; exposed so callers can
/// reconstruct sampler settings for reporting.
pub fn flat_prior_transforms(identified: &[usize]) -> Vec<(String, Transform)> {
    identified
        .iter()
        .map(|s| (format!("beta_{s}"), Transform::LogPositive))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{DayType, ServiceCalendar};
    use crate::ks::one_sample_ks;
    use crate::rng::substream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::distribution::{Continuous, ContinuousCDF, Gamma as StatGamma};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn flat_series(days: usize, y: f64) -> FlowSeries {
        let cal = ServiceCalendar::new(d("2019-01-07"), vec![DayType::Ord; days]).unwrap();
        FlowSeries::new(cal, vec![y; days]).unwrap()
    }

    fn one_day_log(date: &str, times: &[f64], waits: &[f64]) -> RequestLog {
        RequestLog::new(vec![DayWaits {
            date: d(date),
            request_minutes: times.to_vec(),
            pseudo_waits: waits.to_vec(),
            arrivals: None,
            perceived: None,
        }])
        .unwrap()
    }

    #[test]
    fn grid_maps_boundaries_half_open() {
        let grid = IntervalGrid::new(8).unwrap();
        assert_eq!(grid.width_minutes(), 180.0);
        assert_eq!(grid.interval_of(0.0).unwrap(), 1);
        assert_eq!(grid.interval_of(179.999).unwrap(), 1);
        assert_eq!(grid.interval_of(180.0).unwrap(), 2);
        assert_eq!(grid.interval_of(1439.9).unwrap(), 8);
        assert!(matches!(grid.interval_of(1440.0), Err(WaitError::TimeOutOfDay { .. })));
        assert!(matches!(grid.interval_of(-0.1), Err(WaitError::TimeOutOfDay { .. })));
        assert!(matches!(IntervalGrid::new(7), Err(WaitError::InvalidGrid(7))));
        for s in [8usize, 24, 96] {
            assert!(IntervalGrid::new(s).is_ok());
        }
    }

    #[test]
    fn pseudo_waits_match_worked_examples() {
        // Overlapping service: the second passenger waits only from the
        // first departure.
        let w = pseudo_waits_from_events(&[0.0, 1.0], &[3.0, 5.0]).unwrap();
        assert_eq!(w.pseudo, vec![3.0, 2.0]);
        assert_eq!(w.perceived, vec![3.0, 4.0]);

        // Head of queue: pseudo equals perceived.
        let w = pseudo_waits_from_events(&[10.0], &[12.0]).unwrap();
        assert_eq!(w.pseudo, vec![2.0]);
        assert_eq!(w.perceived, vec![2.0]);

        // No overlap: pseudo equals perceived for everyone.
        let w = pseudo_waits_from_events(&[0.0, 5.0], &[2.0, 9.0]).unwrap();
        assert_eq!(w.pseudo, vec![2.0, 4.0]);
        assert_eq!(w.perceived, vec![2.0, 4.0]);
    }

    #[test]
    fn out_of_order_arrivals_are_data_errors() {
        let err = pseudo_waits_from_events(&[0.0, 1.0], &[3.0, 2.0]).unwrap_err();
        assert!(matches!(err, WaitError::ArrivalBeforeService { position: 2, .. }));
        let err = pseudo_waits_from_events(&[0.0, 1.0], &[3.0]).unwrap_err();
        assert!(matches!(err, WaitError::EventLengthMismatch { .. }));
        let err = pseudo_waits_from_events(&[5.0, 1.0], &[6.0, 7.0]).unwrap_err();
        assert!(matches!(err, WaitError::RequestsNotIncreasing { .. }));
    }

    proptest! {
        #[test]
        fn pseudo_never_exceeds_perceived(
            gaps in proptest::collection::vec(0.1..30.0f64, 1..20),
            service in proptest::collection::vec(0.1..40.0f64, 20),
        ) {
            // Build a valid FIFO event set: requests from cumulative gaps,
            // arrivals one service gap after each serviceable instant.
            let mut requests = Vec::new();
            let mut t = 0.0;
            for g in &gaps {
                t += g;
                requests.push(t);
            }
            let mut arrivals = Vec::new();
            let mut prev = requests[0];
            for (j, &t) in requests.iter().enumerate() {
                let a = t.max(prev) + service[j];
                arrivals.push(a);
                prev = a;
            }
            let w = pseudo_waits_from_events(&requests, &arrivals).unwrap();
            for j in 0..requests.len() {
                prop_assert!(w.pseudo[j] <= w.perceived[j] + 1e-12);
                let prev_dep = if j == 0 { requests[0] } else { arrivals[j - 1] };
                if prev_dep <= requests[j] {
                    prop_assert!((w.pseudo[j] - w.perceived[j]).abs() < 1e-12);
                } else {
                    prop_assert!(w.pseudo[j] < w.perceived[j]);
                }
            }
        }
    }

    #[test]
    fn single_exponential_observation_likelihood() {
        // ν=1, β·y=1, w=1: density e^{−1}, log −1.
        let flows = flat_series(1, 1.0);
        let log = one_day_log("2019-01-07", &[30.0], &[1.0]);
        let grid = IntervalGrid::new(8).unwrap();
        let wp = WaitParams::new(1.0, vec![1.0; 8]).unwrap();
        let ll = wait_log_likelihood(&wp, &flows, &log, &grid).unwrap();
        assert_abs_diff_eq!(ll, -1.0, epsilon = 1e-12);
    }

    /// Twelve observations across three intervals and two days.
    fn fixture() -> (FlowSeries, RequestLog, IntervalGrid) {
        let cal = ServiceCalendar::new(d("2019-01-07"), vec![DayType::Ord; 2]).unwrap();
        let flows = FlowSeries::new(cal, vec![40.0, 55.0]).unwrap();
        let log = RequestLog::new(vec![
            DayWaits {
                date: d("2019-01-07"),
                request_minutes: vec![10.0, 20.0, 200.0, 210.0, 400.0, 420.0],
                pseudo_waits: vec![3.0, 5.5, 2.0, 8.0, 4.0, 6.5],
                arrivals: None,
                perceived: None,
            },
            DayWaits {
                date: d("2019-01-08"),
                request_minutes: vec![15.0, 25.0, 220.0, 230.0, 410.0, 430.0],
                pseudo_waits: vec![2.5, 7.0, 3.5, 1.5, 9.0, 5.0],
                arrivals: None,
                perceived: None,
            },
        ])
        .unwrap();
        (flows, log, IntervalGrid::new(8).unwrap())
    }

    #[test]
    fn likelihood_matches_density_product_oracle() {
        let (flows, log, grid) = fixture();
        let nu = 2.5;
        let beta = vec![0.02, 0.015, 0.01, 0.012, 0.02, 0.02, 0.02, 0.02];
        let wp = WaitParams::new(nu, beta.clone()).unwrap();
        let ll = wait_log_likelihood(&wp, &flows, &log, &grid).unwrap();

        // Independent oracle: product of Gamma(ν, rate β_s y_i) densities.
        let mut oracle = 0.0;
        for (day_idx, day) in log.days().iter().enumerate() {
            let y = flows.flow(day_idx + 1).unwrap();
            for (&t, &w) in day.request_minutes.iter().zip(&day.pseudo_waits) {
                let s = grid.interval_of(t).unwrap();
                let dist = StatGamma::new(nu, beta[s - 1] * y).unwrap();
                oracle += dist.ln_pdf(w);
            }
        }
        assert_abs_diff_eq!(ll, oracle, epsilon = 1e-10);
    }

    #[test]
    fn likelihood_factorizes_across_intervals() {
        let (flows, log, grid) = fixture();
        let wp = WaitParams::new(3.0, vec![0.01; 8]).unwrap();
        let total = wait_log_likelihood(&wp, &flows, &log, &grid).unwrap();

        // Rebuild the log interval by interval and sum the pieces.
        let mut sum = 0.0;
        for s in 1..=8 {
            let days: Vec<DayWaits> = log
                .days()
                .iter()
                .filter_map(|day| {
                    let pairs: Vec<(f64, f64)> = day
                        .request_minutes
                        .iter()
                        .zip(&day.pseudo_waits)
                        .filter(|(&t, _)| grid.interval_of(t).unwrap() == s)
                        .map(|(&t, &w)| (t, w))
                        .collect();
                    if pairs.is_empty() {
                        return None;
                    }
                    Some(DayWaits {
                        date: day.date,
                        request_minutes: pairs.iter().map(|p| p.0).collect(),
                        pseudo_waits: pairs.iter().map(|p| p.1).collect(),
                        arrivals: None,
                        perceived: None,
                    })
                })
                .collect();
            if days.is_empty() {
                continue;
            }
            let sub = RequestLog::new(days).unwrap();
            sum += wait_log_likelihood(&wp, &flows, &sub, &grid).unwrap();
        }
        assert_abs_diff_eq!(total, sum, epsilon = 1e-10);
    }

    #[test]
    fn zero_beta_with_data_is_negative_infinity() {
        let (flows, log, grid) = fixture();
        // Interval 1 has data: zeroing its coefficient kills the density.
        let mut beta = vec![0.01; 8];
        beta[0] = 0.0;
        let wp = WaitParams::new(2.0, beta).unwrap();
        let ll = wait_log_likelihood(&wp, &flows, &log, &grid).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);

        // Zero on an interval without data is harmless.
        let mut beta = vec![0.01; 8];
        beta[7] = 0.0;
        let wp = WaitParams::new(2.0, beta).unwrap();
        assert!(wait_log_likelihood(&wp, &flows, &log, &grid).unwrap().is_finite());
    }

    #[test]
    fn posterior_equals_likelihood_under_flat_prior() {
        let (flows, log, grid) = fixture();
        let nu = 2.0;
        let beta = vec![0.02, 0.01, 0.015, 0.01, 0.01, 0.01, 0.01, 0.01];
        let wp = WaitParams::new(nu, beta.clone()).unwrap();
        let ll = wait_log_likelihood(&wp, &flows, &log, &grid).unwrap();
        let lp =
            beta_log_posterior(nu, &beta, &flows, &log, &grid, &BetaPrior::FlatPositive).unwrap();
        assert_abs_diff_eq!(ll, lp, epsilon = 1e-12);

        // Outside the support the posterior is −∞, not an error.
        let mut neg = beta.clone();
        neg[2] = -0.01;
        let lp =
            beta_log_posterior(nu, &neg, &flows, &log, &grid, &BetaPrior::FlatPositive).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn dirichlet_prior_adds_log_density_kernel() {
        // Three-interval grid (480 min each) with a hand-evaluated
        // Dirichlet kernel at a 3-point β.
        let grid = IntervalGrid::new(3).unwrap();
        let flows = flat_series(1, 50.0);
        let log = one_day_log("2019-01-07", &[100.0, 600.0, 1100.0], &[4.0, 3.0, 5.0]);
        let nu = 2.0;
        let beta = [0.5, 0.3, 0.2];
        let alpha = vec![2.0, 3.0, 1.5];
        let flat =
            beta_log_posterior(nu, &beta, &flows, &log, &grid, &BetaPrior::FlatPositive).unwrap();
        let dir = beta_log_posterior(
            nu,
            &beta,
            &flows,
            &log,
            &grid,
            &BetaPrior::Dirichlet { alpha: alpha.clone() },
        )
        .unwrap();
        let kernel = (2.0 - 1.0) * 0.5f64.ln() + (3.0 - 1.0) * 0.3f64.ln()
            + (1.5 - 1.0) * 0.2f64.ln();
        assert_abs_diff_eq!(dir - flat, kernel, epsilon = 1e-12);
    }

    #[test]
    fn conjugate_posterior_matches_algebra() {
        // ν=7, n_s=10, Σ y·w = 500 → Gamma(71, 500), mean 0.142.
        // Build: one day, flow 10, ten waits of 5 min each → Σ = 500.
        let flows = flat_series(1, 10.0);
        let times: Vec<f64> = (0..10).map(|j| 10.0 + j as f64).collect();
        let log = one_day_log("2019-01-07", &times, &[5.0; 10]);
        let grid = IntervalGrid::new(8).unwrap();
        let post = beta_conjugate_posterior(7.0, &flows, &log, &grid, 1).unwrap();
        assert_abs_diff_eq!(post.shape, 71.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.rate, 500.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.mean(), 0.142, epsilon = 1e-12);

        // Single exponential observation: Gamma(2, 1).
        let flows = flat_series(1, 1.0);
        let log = one_day_log("2019-01-07", &[30.0], &[1.0]);
        let post = beta_conjugate_posterior(1.0, &flows, &log, &grid, 1).unwrap();
        assert_abs_diff_eq!(post.shape, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.rate, 1.0, epsilon = 1e-12);

        // Empty interval: improper posterior.
        assert!(matches!(
            beta_conjugate_posterior(1.0, &flows, &log, &grid, 5),
            Err(WaitError::UnidentifiedInterval { s: 5 })
        ));
    }

    #[test]
    fn conjugate_posterior_concentrates_on_truth() {
        // Simulate 10^4 waits at known β: the posterior mean lands within
        // 2% of the truth.
        let true_beta = 0.013;
        let nu = 7.0;
        let y = 80.0;
        let n = 10_000usize;
        let mut rng = substream_rng(41, "conjugate-consistency");
        let dist = Gamma::new(nu, 1.0 / (true_beta * y)).unwrap();
        // Spread a long day of requests inside interval 1 (one wait per
        // synthetic day would need a huge calendar; instead use many days
        // of the same flow).
        let days = 100usize;
        let per_day = n / days;
        let cal = ServiceCalendar::new(d("2019-01-07"), vec![DayType::Ord; days]).unwrap();
        let flows = FlowSeries::new(cal, vec![y; days]).unwrap();
        let mut day_list = Vec::new();
        let mut date = d("2019-01-07");
        for _ in 0..days {
            let times: Vec<f64> = (0..per_day).map(|j| 1.0 + j as f64 * 0.5).collect();
            let waits: Vec<f64> = (0..per_day).map(|_| dist.sample(&mut rng)).collect();
            day_list.push(DayWaits {
                date,
                request_minutes: times,
                pseudo_waits: waits,
                arrivals: None,
                perceived: None,
            });
            date = date.succ_opt().unwrap();
        }
        let log = RequestLog::new(day_list).unwrap();
        let grid = IntervalGrid::new(8).unwrap();
        let post = beta_conjugate_posterior(nu, &flows, &log, &grid, 1).unwrap();
        assert!(
            (post.mean() - true_beta).abs() < 0.02 * true_beta,
            "posterior mean {} vs {true_beta}",
            post.mean()
        );
    }

    fn reference_beta() -> Vec<f64> {
        vec![0.012, 0.01, 0.011, 0.013, 0.018, 0.016, 0.017, 0.019]
    }

    #[test]
    fn simulator_runs_reference_setting_and_is_deterministic() {
        let cal = ServiceCalendar::from_rules(
            d("2018-01-01"),
            365,
            &[(d("2018-07-07"), d("2018-09-02"))],
            &[d("2018-01-01"), d("2018-05-01")],
        )
        .unwrap();
        let fp = FlowParams::new(0.333, 0.33, 0.331, 1.0, 1.0, 5.0).unwrap();
        let grid = IntervalGrid::new(8).unwrap();
        let mut rng = substream_rng(42, "wait-sim");
        let sim =
            simulate_waits(&cal, &fp, 3, 30.0, 7.0, &reference_beta(), 10, &grid, &mut rng).unwrap();
        assert_eq!(sim.flows.len(), 365);
        assert_eq!(sim.replicates.len(), 10);
        for rep in &sim.replicates {
            assert_eq!(rep.days(), 365);
            assert_eq!(rep.intervals(), 8);
            assert!(rep.values().iter().all(|&w| w > 0.0));
        }
        // Bit-identical reproduction.
        let mut rng2 = substream_rng(42, "wait-sim");
        let sim2 =
            simulate_waits(&cal, &fp, 3, 30.0, 7.0, &reference_beta(), 10, &grid, &mut rng2).unwrap();
        assert_eq!(sim, sim2);
    }

    #[test]
    fn simulated_cell_means_follow_gamma_mean() {
        // Empirical mean of cell (i, s) over many replicates approaches
        // ν/(β_s·y_i) within 3 standard errors.
        let cal = ServiceCalendar::new(d("2018-01-01"), vec![DayType::Ord; 4]).unwrap();
        let fp = FlowParams::new(1.0 / 3.0, 0.33, 0.33, 1.0, 1.0, 1e-12).unwrap();
        let grid = IntervalGrid::new(8).unwrap();
        let nu = 7.0;
        let j = 10_000usize;
        let mut rng = substream_rng(43, "cell-mean");
        let sim = simulate_waits(&cal, &fp, 3, 30.0, nu, &reference_beta(), j, &grid, &mut rng)
            .unwrap();
        for (i, s) in [(1usize, 1usize), (2, 5), (4, 8)] {
            let y = sim.flows[i - 1];
            let b = reference_beta()[s - 1];
            let expect = nu / (b * y);
            let cells: Vec<f64> = sim.replicates.iter().map(|r| r.get(i, s)).collect();
            let m = mean(&cells);
            let se = (sample_variance(&cells) / j as f64).sqrt();
            assert!(
                (m - expect).abs() < 3.0 * se,
                "cell ({i},{s}): mean {m}, expect {expect}, se {se}"
            );
        }
    }

    #[test]
    fn given_flow_prediction_recovers_point_mass() {
        // Degenerate posterior at b: predictive is exactly Γ(ν, b·ỹ).
        let b = 0.012;
        let nu = 7.0;
        let y = 100.0;
        let n = 8000;
        let draws = PosteriorDraws::new(vec!["beta_3".into()], 1, n, vec![b; n]).unwrap();
        let mut rng = substream_rng(44, "point-mass");
        let sample = predict_wait_given_flow(&draws, nu, y, 3, &mut rng).unwrap();
        assert_eq!(sample.len(), n);
        let reference = StatGamma::new(nu, b * y).unwrap();
        let (stat, p) = one_sample_ks(&sample, |w| reference.cdf(w)).unwrap();
        assert!(p > 0.01, "KS stat {stat}, p {p}");
    }

    #[test]
    fn doubling_flow_halves_predictive_mean() {
        let b = 0.015;
        let nu = 5.0;
        let n = 20_000;
        let draws = PosteriorDraws::new(vec!["beta_1".into()], 1, n, vec![b; n]).unwrap();
        let mut rng = substream_rng(45, "halving");
        let at_y = predict_wait_given_flow(&draws, nu, 60.0, 1, &mut rng).unwrap();
        let at_2y = predict_wait_given_flow(&draws, nu, 120.0, 1, &mut rng).unwrap();
        let (m1, m2) = (mean(&at_y), mean(&at_2y));
        let se = (sample_variance(&at_y) / n as f64).sqrt();
        assert!((m1 - 2.0 * m2).abs() < 3.0 * se * 2.0, "m1 {m1}, m2 {m2}");
    }

    #[test]
    fn predictive_mean_matches_quadrature_oracle() {
        // β posterior Gamma(a0, r0); the closed-form predictive mean should match
        // grid quadrature of E[ν/(β ỹ)] over the posterior within 1%.
        let a0 = 71.0;
        let r0 = 500.0;
        let nu = 7.0;
        let y = 90.0;
        let n = 40_000;
        let mut rng = substream_rng(46, "quadrature");
        let post = Gamma::new(a0, 1.0 / r0).unwrap();
        let betas: Vec<f64> = (0..n).map(|_| post.sample(&mut rng)).collect();
        let draws = PosteriorDraws::new(vec!["beta_2".into()], 1, n, betas).unwrap();
        let sample = predict_wait_given_flow(&draws, nu, y, 2, &mut rng).unwrap();
        let pred_mean = mean(&sample);

        // 10^4-point trapezoid over the posterior density.
        let dist = StatGamma::new(a0, r0).unwrap();
        let lo = 1e-6;
        let hi = dist.inverse_cdf(1.0 - 1e-10);
        let steps = 10_000usize;
        let h = (hi - lo) / steps as f64;
        let f = |b: f64| (nu / (b * y)) * dist.pdf(b);
        let mut quad = 0.5 * (f(lo) + f(hi));
        for j in 1..steps {
            quad += f(lo + j as f64 * h);
        }
        quad *= h;
        assert!(
            (pred_mean - quad).abs() < 0.01 * quad,
            "sampled {pred_mean}, quadrature {quad}"
        );
    }

    #[test]
    fn marginal_collapses_to_given_flow_on_degenerate_flows() {
        let b = 0.011;
        let nu = 6.0;
        let y = 75.0;
        let n = 5000;
        let draws = PosteriorDraws::new(vec!["beta_4".into()], 1, n, vec![b; n]).unwrap();
        let mut rng_a = substream_rng(47, "collapse");
        let mut rng_b = substream_rng(47, "collapse");
        let given = predict_wait_given_flow(&draws, nu, y, 4, &mut rng_a).unwrap();
        let marginal = predict_wait_marginal(&draws, nu, &vec![y; n], 4, &mut rng_b).unwrap();
        assert_eq!(given, marginal);
    }

    #[test]
    fn marginal_mean_dominates_by_jensen() {
        // Mixing over flows {50, 150} versus their mean 100: E[1/y] > 1/E[y].
        let b = 0.012;
        let nu = 7.0;
        let n = 40_000;
        let draws = PosteriorDraws::new(vec!["beta_1".into()], 1, n, vec![b; n]).unwrap();
        let flows: Vec<f64> =
            (0..n).map(|j| if j % 2 == 0 { 50.0 } else { 150.0 }).collect();
        let mut rng = substream_rng(48, "jensen");
        let mixed = predict_wait_marginal(&draws, nu, &flows, 1, &mut rng).unwrap();
        let fixed = predict_wait_given_flow(&draws, nu, 100.0, 1, &mut rng).unwrap();
        let (m_mixed, m_fixed) = (mean(&mixed), mean(&fixed));
        let se = (sample_variance(&mixed) / n as f64).sqrt()
            + (sample_variance(&fixed) / n as f64).sqrt();
        assert!(
            m_mixed - m_fixed > 3.0 * se,
            "mixed {m_mixed} should exceed fixed {m_fixed}"
        );
    }

    #[test]
    fn marginal_output_size_is_min_of_inputs() {
        let draws = PosteriorDraws::new(vec!["beta_1".into()], 1, 10, vec![0.01; 10]).unwrap();
        let mut rng = substream_rng(49, "min-size");
        let out = predict_wait_marginal(&draws, 2.0, &[50.0; 7], 1, &mut rng).unwrap();
        assert_eq!(out.len(), 7);
        let out = predict_wait_marginal(&draws, 2.0, &[50.0; 30], 1, &mut rng).unwrap();
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn predictions_refuse_unidentified_intervals() {
        let draws = PosteriorDraws::new(vec!["beta_1".into()], 1, 5, vec![0.01; 5]).unwrap();
        let mut rng = substream_rng(50, "refuse");
        assert!(matches!(
            predict_wait_given_flow(&draws, 2.0, 50.0, 3, &mut rng),
            Err(WaitError::MissingBetaColumn { s: 3 })
        ));
    }

    #[test]
    fn perceived_composition_at_zero_gap_adds_means() {
        let nu = 7.0;
        let rate1 = 0.5;
        let rate2 = 0.8;
        let n = 30_000;
        let mut rng = substream_rng(51, "zeta0");
        let g1 = Gamma::new(nu, 1.0 / rate1).unwrap();
        let g2 = Gamma::new(nu, 1.0 / rate2).unwrap();
        let w1: Vec<f64> = (0..n).map(|_| g1.sample(&mut rng)).collect();
        let w2: Vec<f64> = (0..n).map(|_| g2.sample(&mut rng)).collect();
        let out = perceived_from_pseudo(&w1, &w2, 0.0, &mut rng).unwrap();
        assert_eq!(out.len(), n);
        let expect = mean(&w1) + mean(&w2);
        let se = ((sample_variance(&w1) + sample_variance(&w2)) / n as f64).sqrt();
        assert!((mean(&out) - expect).abs() < 4.0 * se);
    }

    #[test]
    fn perceived_matches_brute_force_oracle() {
        // ζ=2, ν=7, fixed rates: full pairing enumeration vs sampling.
        let nu = 7.0;
        let zeta = 2.0;
        let n = 3000;
        let mut rng = substream_rng(52, "zeta2");
        let g1 = Gamma::new(nu, 1.0 / 0.6).unwrap();
        let g2 = Gamma::new(nu, 1.0 / 0.9).unwrap();
        let w1: Vec<f64> = (0..n).map(|_| g1.sample(&mut rng)).collect();
        let w2: Vec<f64> = (0..n).map(|_| g2.sample(&mut rng)).collect();

        // Brute force: every (accepted w1, w2) pair.
        let accepted: Vec<f64> = w1.iter().copied().filter(|&w| w > zeta).collect();
        let mut brute_sum = 0.0;
        for &a in &accepted {
            for &b in &w2 {
                brute_sum += b + a - zeta;
            }
        }
        let brute_mean = brute_sum / (accepted.len() * w2.len()) as f64;

        let out = perceived_from_pseudo(&w1, &w2, zeta, &mut rng).unwrap();
        assert!(
            (mean(&out) - brute_mean).abs() < 0.02 * brute_mean,
            "sampled {}, brute {brute_mean}",
            mean(&out)
        );
    }

    #[test]
    fn impossible_conditioning_is_signalled() {
        let w1 = vec![1.0, 2.0, 3.0];
        let w2 = vec![4.0, 5.0];
        let mut rng = substream_rng(53, "infeasible");
        let err = perceived_from_pseudo(&w1, &w2, 1e9, &mut rng).unwrap_err();
        assert!(matches!(err, WaitError::InfeasibleConditioning { .. }));
        let err = perceived_from_pseudo(&w1, &w2, -1.0, &mut rng).unwrap_err();
        assert!(matches!(err, WaitError::NegativeZeta(_)));
    }

    #[test]
    fn moment_estimate_recovers_shape() {
        // y·w ~ Gamma(ν, β_s): the pooled moment estimate recovers ν.
        let nu = 7.0;
        let days = 50usize;
        let per_day = 100usize;
        let mut rng = substream_rng(54, "nu-moments");
        let cal = ServiceCalendar::new(d("2019-01-07"), vec![DayType::Ord; days]).unwrap();
        let ys: Vec<f64> = (0..days).map(|i| 40.0 + (i % 30) as f64).collect();
        let flows = FlowSeries::new(cal, ys.clone()).unwrap();
        let beta = reference_beta();
        let grid = IntervalGrid::new(8).unwrap();
        let mut day_list = Vec::new();
        let mut date = d("2019-01-07");
        for (i, &y) in ys.iter().enumerate() {
            let mut times = Vec::new();
            let mut waits = Vec::new();
            for j in 0..per_day {
                let s = 1 + (i + j) % 8;
                let (start, _) = grid.bounds(s).unwrap();
                times.push(start + 0.01 * j as f64);
                let dist = Gamma::new(nu, 1.0 / (beta[s - 1] * y)).unwrap();
                waits.push(dist.sample(&mut rng));
            }
            let order: Vec<usize> = {
                let mut idx: Vec<usize> = (0..times.len()).collect();
                idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
                idx
            };
            day_list.push(DayWaits {
                date,
                request_minutes: order.iter().map(|&k| times[k]).collect(),
                pseudo_waits: order.iter().map(|&k| waits[k]).collect(),
                arrivals: None,
                perceived: None,
            });
            date = date.succ_opt().unwrap();
        }
        let log = RequestLog::new(day_list).unwrap();
        let nu_hat = estimate_nu_moments(&flows, &log, &grid).unwrap();
        assert!((nu_hat - nu).abs() < 0.08 * nu, "nu_hat {nu_hat}");

        // Scale invariance: rescaling flows and waits in opposite
        // directions leaves every z = y·w unchanged.
        let flows2 =
            FlowSeries::new(flows.calendar().clone(), ys.iter().map(|y| y * 3.0).collect())
                .unwrap();
        let days2: Vec<DayWaits> = log
            .days()
            .iter()
            .map(|day| DayWaits {
                date: day.date,
                request_minutes: day.request_minutes.clone(),
                pseudo_waits: day.pseudo_waits.iter().map(|w| w / 3.0).collect(),
                arrivals: None,
                perceived: None,
            })
            .collect();
        let log2 = RequestLog::new(days2).unwrap();
        let nu_hat2 = estimate_nu_moments(&flows2, &log2, &grid).unwrap();
        assert_abs_diff_eq!(nu_hat, nu_hat2, epsilon = 1e-9);
    }

    #[test]
    fn moment_estimate_requires_repeated_observations() {
        let flows = flat_series(1, 10.0);
        let log = one_day_log("2019-01-07", &[30.0], &[5.0]);
        let grid = IntervalGrid::new(8).unwrap();
        assert!(matches!(
            estimate_nu_moments(&flows, &log, &grid),
            Err(WaitError::NuEstimation)
        ));
    }

    /// Fifty observations in interval 1 at a fixed flow.
    fn fit_fixture(seed: u64) -> (FlowSeries, RequestLog, IntervalGrid, f64, f64) {
        let nu = 7.0;
        let true_beta = 0.012;
        let days = 10usize;
        let per_day = 5usize;
        let y = 70.0;
        let cal = ServiceCalendar::new(d("2019-01-07"), vec![DayType::Ord; days]).unwrap();
        let flows = FlowSeries::new(cal, vec![y; days]).unwrap();
        let dist = Gamma::new(nu, 1.0 / (true_beta * y)).unwrap();
        let mut rng = substream_rng(seed, "fit-fixture");
        let mut day_list = Vec::new();
        let mut date = d("2019-01-07");
        for _ in 0..days {
            let times: Vec<f64> = (0..per_day).map(|j| 5.0 + j as f64).collect();
            let waits: Vec<f64> = (0..per_day).map(|_| dist.sample(&mut rng)).collect();
            day_list.push(DayWaits {
                date,
                request_minutes: times,
                pseudo_waits: waits,
                arrivals: None,
                perceived: None,
            });
            date = date.succ_opt().unwrap();
        }
        (flows, RequestLog::new(day_list).unwrap(), IntervalGrid::new(8).unwrap(), nu, true_beta)
    }

    #[test]
    fn flat_fit_matches_conjugate_posterior() {
        let (flows, log, grid, nu, _) = fit_fixture(55);
        let cfg = McmcConfig { seed: 56, ..McmcConfig::default() };
        let fit = fit_wait_model(&flows, &log, &grid, nu, &BetaPrior::FlatPositive, &cfg).unwrap();
        assert_eq!(fit.identified, vec![1]);
        assert_eq!(fit.unidentified, vec![2, 3, 4, 5, 6, 7, 8]);

        let exact = beta_conjugate_posterior(nu, &flows, &log, &grid, 1).unwrap();
        let reference = StatGamma::new(exact.shape, exact.rate).unwrap();
        let col = fit.draws.column_by_name("beta_1").unwrap();
        let (stat, _) = one_sample_ks(&col, |b| reference.cdf(b)).unwrap();
        assert!(stat < 0.05, "KS stat {stat}");
        let mean_err = (mean(&col) - exact.mean()).abs() / exact.mean();
        assert!(mean_err < 0.01, "relative mean error {mean_err}");
        assert!(fit.diagnostics.params["beta_1"].ess > 2000.0);
    }

    #[test]
    fn dirichlet_fit_stays_on_simplex() {
        // Data in all three intervals of a coarse grid.
        let grid = IntervalGrid::new(3).unwrap();
        let days = 6usize;
        let y = 50.0;
        let nu = 4.0;
        let cal = ServiceCalendar::new(d("2019-01-07"), vec![DayType::Ord; days]).unwrap();
        let flows = FlowSeries::new(cal, vec![y; days]).unwrap();
        let mut rng = substream_rng(57, "dirichlet-data");
        let truth = [0.5, 0.3, 0.2];
        let mut day_list = Vec::new();
        let mut date = d("2019-01-07");
        for _ in 0..days {
            let mut times = Vec::new();
            let mut waits = Vec::new();
            for s in 1..=3usize {
                let (start, _) = grid.bounds(s).unwrap();
                for j in 0..4 {
                    times.push(start + j as f64);
                    let dist = Gamma::new(nu, 1.0 / (truth[s - 1] * y)).unwrap();
                    waits.push(dist.sample(&mut rng));
                }
            }
            day_list.push(DayWaits {
                date,
                request_minutes: times,
                pseudo_waits: waits,
                arrivals: None,
                perceived: None,
            });
            date = date.succ_opt().unwrap();
        }
        let log = RequestLog::new(day_list).unwrap();
        let cfg = McmcConfig {
            warmup_iters: 1000,
            keep_iters: 2000,
            seed: 58,
            ..McmcConfig::default()
        };
        let prior = BetaPrior::Dirichlet { alpha: vec![1.0, 1.0, 1.0] };
        let fit = fit_wait_model(&flows, &log, &grid, nu, &prior, &cfg).unwrap();
        assert_eq!(fit.draws.names().len(), 3);
        for c in 0..fit.draws.chains() {
            for t in 0..fit.draws.iters_per_chain() {
                let row = fit.draws.row(c, t);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "simplex violated: {sum}");
                assert!(row.iter().all(|&b| b > 0.0));
            }
        }
        // Posterior means order like the truth.
        let m1 = fit.draws.mean_of("beta_1").unwrap();
        let m2 = fit.draws.mean_of("beta_2").unwrap();
        let m3 = fit.draws.mean_of("beta_3").unwrap();
        assert!(m1 > m2 && m2 > m3, "means {m1} {m2} {m3}");
        assert!((m1 - 0.5).abs() < 0.1);
    }

    #[test]
    fn stick_break_round_trip_properties() {
        let (beta, _) = stick_break(&[0.0; 7]);
        assert_eq!(beta.len(), 8);
        for b in &beta {
            assert_abs_diff_eq!(*b, 0.125, epsilon = 1e-12);
        }
        let (beta, _) = stick_break(&[2.0, -1.0, 0.3]);
        assert_abs_diff_eq!(beta.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(beta.iter().all(|&b| b > 0.0));
    }

    #[test]
    fn request_log_validation() {
        let bad_order = RequestLog::new(vec![DayWaits {
            date: d("2019-01-07"),
            request_minutes: vec![10.0, 10.0],
            pseudo_waits: vec![1.0, 1.0],
            arrivals: None,
            perceived: None,
        }]);
        assert!(matches!(bad_order, Err(WaitError::RequestsNotIncreasing { .. })));

        let bad_wait = RequestLog::new(vec![DayWaits {
            date: d("2019-01-07"),
            request_minutes: vec![10.0],
            pseudo_waits: vec![0.0],
            arrivals: None,
            perceived: None,
        }]);
        assert!(matches!(bad_wait, Err(WaitError::InvalidWait { .. })));

        let dup_day = RequestLog::new(vec![
            DayWaits {
                date: d("2019-01-07"),
                request_minutes: vec![10.0],
                pseudo_waits: vec![1.0],
                arrivals: None,
                perceived: None,
            },
            DayWaits {
                date: d("2019-01-07"),
                request_minutes: vec![11.0],
                pseudo_waits: vec![1.0],
                arrivals: None,
                perceived: None,
            },
        ]);
        assert!(matches!(dup_day, Err(WaitError::DaysNotAscending { .. })));
    }

    #[test]
    fn likelihood_requires_flows_for_logged_days() {
        let flows = flat_series(1, 10.0);
        let log = one_day_log("2020-05-05", &[30.0], &[5.0]);
        let grid = IntervalGrid::new(8).unwrap();
        let wp = WaitParams::new(1.0, vec![0.01; 8]).unwrap();
        assert!(matches!(
            wait_log_likelihood(&wp, &flows, &log, &grid),
            Err(WaitError::MissingFlow { .. })
        ));
    }
}
