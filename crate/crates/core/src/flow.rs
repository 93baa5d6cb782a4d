//! Daily driver flow: a multi-level moving average with day-type levels.
//!
//! The mean of day `i` is `g_i = α_DT(i) · Σ_{k=1..K} η_DT(i−k) · y_{i−k}`:
//! a moving average of the last `K` flows where the current day type sets
//! the level `α` and each history day contributes through its own
//! rescaling coefficient `η` (`η_ORD ≡ 1` for identifiability). Gaussian
//! noise with variance `σ²_ε` closes the model.
//!
//! The conditional likelihood normalises over `M` terms where `M` depends
//! on [`LikelihoodRange`]: the residual sum always runs over days
//! `K+1..=N` (earlier days lack a full history), while the normalisation
//! count is `N−K+1` for [`LikelihoodRange::AsPrinted`] and `N−K` for
//! [`LikelihoodRange::Conditional`]. The posterior adds the scale prior
//! `π(θ) ∝ σ_ε^{−2}`.
//!
//! Generative simulation comes in two forms: [`simulate_flow`] (single
//! level `α`) and [`simulate_flow_daytypes`], which dispatches the
//! effective level of the current day type (`α_ORD`, `α_SCH·η_SCH`, or
//! `α_PWE·η_PWE`) onto the raw sum of the previous `K` simulated flows.
//! The two coincide in distribution whenever every `η` is 1. Both clamp
//! simulated days to positive values by rejection, capped at
//! [`POSITIVITY_REJECTION_CAP`] attempts.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{CalendarError, DayType, ServiceCalendar};
use crate::mcmc::{self, McmcConfig, McmcError, McmcRun, Param, PosteriorDraws};
use crate::util::population_variance;

/// Attempt cap of every repeat-until-positive draw loop.
pub const POSITIVITY_REJECTION_CAP: usize = 1000;

/// Default initialisation mean of the first `K` simulated days.
pub const DEFAULT_INIT_MEAN: f64 = 30.0;

/// Flow-model errors.
#[derive(Debug, Error)]
pub enum FlowError {
    /// Parameters must be strictly positive.
    #[error("flow parameter {name} must be > 0, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    /// Flows must be strictly positive and finite.
    #[error("flow at day {index} must be a positive finite number, got {value}")]
    InvalidFlow { index: usize, value: f64 },
    /// Series length must match its calendar.
    #[error("series has {flows} flows but calendar covers {days} days")]
    LengthMismatch { flows: usize, days: usize },
    /// Moving-average order must be at least 1.
    #[error("moving-average order must be >= 1")]
    ZeroOrder,
    /// Day index without a full history window.
    #[error("day {i} needs {k} previous days; history starts at day 1")]
    HistoryTooShort { i: usize, k: usize },
    /// Likelihood needs more observations than the order.
    #[error("series of {n} days too short for order {k}: need n > k")]
    SeriesTooShort { n: usize, k: usize },
    /// Repeat-until-positive loop exceeded its cap.
    #[error("day {day}: no positive draw in {cap} attempts (mean too negative?)")]
    RejectionCapExceeded { day: usize, cap: usize },
    /// Predictive sampling needs a nonempty draw set.
    #[error("posterior draw set is empty or lacks parameter {missing:?}")]
    MissingDrawParam { missing: String },
    /// Extended calendar must agree with the observed series.
    #[error("extended calendar mismatch: {0}")]
    CalendarMismatch(String),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

/// Which normalisation count the conditional likelihood uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodRange {
    /// Normalisation count `N−K+1`, matching the printed closed form.
    #[default]
    AsPrinted,
    /// Normalisation count `N−K`, one per computable residual.
    Conditional,
}

impl LikelihoodRange {
    /// Number of normalisation terms for a series of length `n`.
    fn term_count(self, n: usize, k: usize) -> usize {
        match self {
            LikelihoodRange::AsPrinted => n - k + 1,
            LikelihoodRange::Conditional => n - k,
        }
    }
}

/// Names of the free parameters, in storage order.
pub const FLOW_PARAM_NAMES: [&str; 6] =
    ["alpha_ord", "alpha_sch", "alpha_pwe", "eta_sch", "eta_pwe", "sigma2_eps"];

/// Flow-model parameters θ; `η_ORD` is fixed at 1 and not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    alpha_ord: f64,
    alpha_sch: f64,
    alpha_pwe: f64,
    eta_sch: f64,
    eta_pwe: f64,
    sigma2_eps: f64,
}

impl FlowParams {
    /// Validates strict positivity of every parameter.
    pub fn new(
        alpha_ord: f64,
        alpha_sch: f64,
        alpha_pwe: f64,
        eta_sch: f64,
        eta_pwe: f64,
        sigma2_eps: f64,
    ) -> Result<Self, FlowError> {
        let fields = [
            ("alpha_ord", alpha_ord),
            ("alpha_sch", alpha_sch),
            ("alpha_pwe", alpha_pwe),
            ("eta_sch", eta_sch),
            ("eta_pwe", eta_pwe),
            ("sigma2_eps", sigma2_eps),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(FlowError::NonPositiveParam { name, value });
            }
        }
        Ok(FlowParams { alpha_ord, alpha_sch, alpha_pwe, eta_sch, eta_pwe, sigma2_eps })
    }

    /// Parameters in [`FLOW_PARAM_NAMES`] order.
    pub fn from_array(v: [f64; 6]) -> Result<Self, FlowError> {
        FlowParams::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// Parameters in [`FLOW_PARAM_NAMES`] order.
    pub fn to_array(self) -> [f64; 6] {
        [self.alpha_ord, self.alpha_sch, self.alpha_pwe, self.eta_sch, self.eta_pwe, self.sigma2_eps]
    }

    pub fn alpha_ord(&self) -> f64 {
        self.alpha_ord
    }

    pub fn alpha_sch(&self) -> f64 {
        self.alpha_sch
    }

    pub fn alpha_pwe(&self) -> f64 {
        self.alpha_pwe
    }

    pub fn eta_sch(&self) -> f64 {
        self.eta_sch
    }

    pub fn eta_pwe(&self) -> f64 {
        self.eta_pwe
    }

    pub fn sigma2_eps(&self) -> f64 {
        self.sigma2_eps
    }

    /// Current-day level coefficient α of `dt`.
    pub fn alpha(&self, dt: DayType) -> f64 {
        match dt {
            DayType::Ord => self.alpha_ord,
            DayType::Sch => self.alpha_sch,
            DayType::Pwe => self.alpha_pwe,
        }
    }

    /// History rescaling coefficient η of `dt`; `η_ORD ≡ 1`.
    pub fn eta(&self, dt: DayType) -> f64 {
        match dt {
            DayType::Ord => 1.0,
            DayType::Sch => self.eta_sch,
            DayType::Pwe => self.eta_pwe,
        }
    }

    /// Effective single-level coefficient of `dt` used by the day-type
    /// simulator: `α_DT · η_DT`.
    pub fn effective_alpha(&self, dt: DayType) -> f64 {
        self.alpha(dt) * self.eta(dt)
    }
}

/// Observed daily flows aligned to a service calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    calendar: ServiceCalendar,
    flows: Vec<f64>,
}

impl FlowSeries {
    /// Validates positivity and length agreement.
    pub fn new(calendar: ServiceCalendar, flows: Vec<f64>) -> Result<Self, FlowError> {
        if flows.len() != calendar.len() {
            return Err(FlowError::LengthMismatch { flows: flows.len(), days: calendar.len() });
        }
        for (j, &y) in flows.iter().enumerate() {
            if !y.is_finite() || y <= 0.0 {
                return Err(FlowError::InvalidFlow { index: j + 1, value: y });
            }
        }
        Ok(FlowSeries { calendar, flows })
    }

    /// Number of observed days N.
    pub fn len(&self) -> usize {
        self.flows.len()
    }

    /// Always false: construction requires a nonempty calendar.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flow of day `i` (1-based).
    pub fn flow(&self, i: usize) -> Result<f64, FlowError> {
        if i == 0 || i > self.len() {
            return Err(FlowError::HistoryTooShort { i, k: 0 });
        }
        Ok(self.flows[i - 1])
    }

    /// All flows in day order.
    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    /// The aligned calendar.
    pub fn calendar(&self) -> &ServiceCalendar {
        &self.calendar
    }

    /// Date of day `i`.
    pub fn date(&self, i: usize) -> Result<NaiveDate, FlowError> {
        Ok(self.calendar.date(i)?)
    }

    /// Sub-series covering days `first..=last`.
    pub fn slice(&self, first: usize, last: usize) -> Result<FlowSeries, FlowError> {
        let cal = self.calendar.slice(first, last)?;
        FlowSeries::new(cal, self.flows[first - 1..last].to_vec())
    }
}

/// Mean flow `g_i(θ)` of day `i` given the `K`-day history.
///
/// Requires `K < i ≤ N` so that the history window and the current day
/// type both exist.
pub fn flow_mean(
    params: &FlowParams,
    series: &FlowSeries,
    i: usize,
    order: usize,
) -> Result<f64, FlowError> {
    if order == 0 {
        return Err(FlowError::ZeroOrder);
    }
    if i <= order {
        return Err(FlowError::HistoryTooShort { i, k: order });
    }
    let dt_i = series.calendar().day_type(i)?;
    let mut acc = 0.0;
    for k in 1..=order {
        let past = i - k;
        let dt_past = series.calendar().day_type(past)?;
        acc += params.eta(dt_past) * series.flow(past)?;
    }
    Ok(params.alpha(dt_i) * acc)
}

/// Per-day sufficient terms for fast likelihood evaluation: the history
/// sums split by day type, computed once per (series, order).
struct FlowTargetCache {
    /// Rows for days `K+1..=N`: (y_i, day type index, Σ per history type).
    rows: Vec<(f64, usize, [f64; 3])>,
    term_count: f64,
}

impl FlowTargetCache {
    fn build(
        series: &FlowSeries,
        order: usize,
        range: LikelihoodRange,
    ) -> Result<Self, FlowError> {
        let n = series.len();
        if order == 0 {
            return Err(FlowError::ZeroOrder);
        }
        if n <= order {
            return Err(FlowError::SeriesTooShort { n, k: order });
        }
        let mut rows = Vec::with_capacity(n - order);
        for i in order + 1..=n {
            let mut sums = [0.0; 3];
            for k in 1..=order {
                let past = i - k;
                let slot = match series.calendar().day_type(past)? {
                    DayType::Ord => 0,
                    DayType::Sch => 1,
                    DayType::Pwe => 2,
                };
                sums[slot] += series.flow(past)?;
            }
            let dt = match series.calendar().day_type(i)? {
                DayType::Ord => 0,
                DayType::Sch => 1,
                DayType::Pwe => 2,
            };
            rows.push((series.flow(i)?, dt, sums));
        }
        Ok(FlowTargetCache { rows, term_count: range.term_count(n, order) as f64 })
    }

    /// Residual sum of squares at θ.
    fn residual_ss(&self, p: &FlowParams) -> f64 {
        let alphas = [p.alpha_ord, p.alpha_sch, p.alpha_pwe];
        let mut ss = 0.0;
        for &(y, dt, sums) in &self.rows {
            let g = alphas[dt] * (sums[0] + p.eta_sch * sums[1] + p.eta_pwe * sums[2]);
            ss += (y - g) * (y - g);
        }
        ss
    }

    fn log_likelihood(&self, p: &FlowParams) -> f64 {
        let s2 = p.sigma2_eps;
        -0.5 * self.term_count * (2.0 * std::f64::consts::PI * s2).ln()
            - self.residual_ss(p) / (2.0 * s2)
    }
}

/// Conditional log-likelihood of the observed series under θ.
///
/// The residual sum runs over days `K+1..=N`; `range` selects the
/// normalisation count (see module docs).
pub fn flow_log_likelihood(
    params: &FlowParams,
    series: &FlowSeries,
    order: usize,
    range: LikelihoodRange,
) -> Result<f64, FlowError> {
    let n = series.len();
    if order == 0 {
        return Err(FlowError::ZeroOrder);
    }
    if n <= order {
        return Err(FlowError::SeriesTooShort { n, k: order });
    }
    let s2 = params.sigma2_eps;
    let mut ss = 0.0;
    for i in order + 1..=n {
        let g = flow_mean(params, series, i, order)?;
        let r = series.flow(i)? - g;
        ss += r * r;
    }
    let m = range.term_count(n, order) as f64;
    Ok(-0.5 * m * (2.0 * std::f64::consts::PI * s2).ln() - ss / (2.0 * s2))
}

/// Unnormalised log-posterior: log-likelihood plus the scale prior
/// `π(θ) ∝ σ_ε^{−2}`, i.e. `flow_log_likelihood − ln σ²_ε`.
pub fn flow_log_posterior(
    params: &FlowParams,
    series: &FlowSeries,
    order: usize,
    range: LikelihoodRange,
) -> Result<f64, FlowError> {
    Ok(flow_log_likelihood(params, series, order, range)? - params.sigma2_eps.ln())
}

/// Draws one day from `Normal(mean, σ²)`, rejecting non-positive values,
/// capped at [`POSITIVITY_REJECTION_CAP`] attempts.
fn positive_normal_draw<R: Rng>(
    mean: f64,
    sigma2: f64,
    day: usize,
    rng: &mut R,
) -> Result<f64, FlowError> {
    let normal = Normal::new(mean, sigma2.sqrt()).expect("validated variance");
    for _ in 0..POSITIVITY_REJECTION_CAP {
        let y = normal.sample(rng);
        if y > 0.0 {
            return Ok(y);
        }
    }
    Err(FlowError::RejectionCapExceeded { day, cap: POSITIVITY_REJECTION_CAP })
}

fn check_sim_inputs(days: usize, sigma2: f64, order: usize) -> Result<(), FlowError> {
    if order == 0 {
        return Err(FlowError::ZeroOrder);
    }
    if days == 0 {
        return Err(FlowError::SeriesTooShort { n: 0, k: order });
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(FlowError::NonPositiveParam { name: "sigma2_eps", value: sigma2 });
    }
    Ok(())
}

/// Simulates `days` daily flows without day types.
///
/// Days `1..=K` draw once from `Normal(init_mean, σ²)` with no positivity
/// rejection; later days draw from `Normal(α·Σ of the K previous flows,
/// σ²)` rejected until positive.
pub fn simulate_flow<R: Rng>(
    days: usize,
    alpha: f64,
    order: usize,
    sigma2: f64,
    init_mean: f64,
    rng: &mut R,
) -> Result<Vec<f64>, FlowError> {
    check_sim_inputs(days, sigma2, order)?;
    if !(alpha > 0.0) {
        return Err(FlowError::NonPositiveParam { name: "alpha", value: alpha });
    }
    if alpha * order as f64 > 1.0 + 1e-12 {
        log::warn!("alpha * K = {} > 1: simulated flows may grow without bound", alpha * order as f64);
    }
    let init = Normal::new(init_mean, sigma2.sqrt()).expect("validated variance");
    let mut flows = Vec::with_capacity(days);
    for i in 1..=days {
        if i <= order {
            flows.push(init.sample(rng));
        } else {
            let mean = alpha * flows[i - 1 - order..i - 1].iter().sum::<f64>();
            flows.push(positive_normal_draw(mean, sigma2, i, rng)?);
        }
    }
    Ok(flows)
}

/// Simulates one flow per calendar day with day-type dispatch: the
/// current day type selects the effective level (`α_ORD`, `α_SCH·η_SCH`,
/// or `α_PWE·η_PWE`) applied to the raw sum of the `K` previous simulated
/// flows. Initialisation and positivity rejection as in [`simulate_flow`].
pub fn simulate_flow_daytypes<R: Rng>(
    calendar: &ServiceCalendar,
    params: &FlowParams,
    order: usize,
    init_mean: f64,
    rng: &mut R,
) -> Result<Vec<f64>, FlowError> {
    let days = calendar.len();
    check_sim_inputs(days, params.sigma2_eps, order)?;
    for dt in DayType::ALL {
        if params.effective_alpha(dt) * order as f64 > 1.0 + 1e-12 {
            log::warn!(
                "effective alpha * K = {} > 1 for {dt}: simulated flows may grow without bound",
                params.effective_alpha(dt) * order as f64
            );
        }
    }
    let init = Normal::new(init_mean, params.sigma2_eps.sqrt()).expect("validated variance");
    let mut flows = Vec::with_capacity(days);
    for i in 1..=days {
        if i <= order {
            flows.push(init.sample(rng));
        } else {
            let level = params.effective_alpha(calendar.day_type(i)?);
            let mean = level * flows[i - 1 - order..i - 1].iter().sum::<f64>();
            flows.push(positive_normal_draw(mean, params.sigma2_eps, i, rng)?);
        }
    }
    Ok(flows)
}

/// Posterior-predictive flow samples over a forecast horizon.
#[derive(Debug, Clone)]
pub struct FlowPredictive {
    /// Dates of the forecast days, in order.
    pub dates: Vec<NaiveDate>,
    /// One simulated path per retained posterior draw: `samples[j][step]`.
    pub samples: Vec<Vec<f64>>,
}

impl FlowPredictive {
    /// Forecast horizon Ñ.
    pub fn horizon(&self) -> usize {
        self.dates.len()
    }

    /// Number of retained draws J.
    pub fn draw_count(&self) -> usize {
        self.samples.len()
    }

    /// Predictive mean per forecast day.
    pub fn mean_per_day(&self) -> Vec<f64> {
        let h = self.horizon();
        let mut means = vec![0.0; h];
        for path in &self.samples {
            for (m, y) in means.iter_mut().zip(path) {
                *m += y;
            }
        }
        for m in &mut means {
            *m /= self.samples.len() as f64;
        }
        means
    }
}

/// Reads the six flow parameters out of one posterior draw row.
fn params_from_row(row: &[f64], idx: &[usize; 6]) -> Result<FlowParams, FlowError> {
    FlowParams::from_array([
        row[idx[0]], row[idx[1]], row[idx[2]], row[idx[3]], row[idx[4]], row[idx[5]],
    ])
}

fn flow_param_indices(draws: &PosteriorDraws) -> Result<[usize; 6], FlowError> {
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(FLOW_PARAM_NAMES) {
        *slot = draws
            .param_index(name)
            .ok_or_else(|| FlowError::MissingDrawParam { missing: name.to_string() })?;
    }
    Ok(idx)
}

/// Rolls the model forward `horizon` days past the observed series for
/// each of `draw_count` evenly thinned posterior draws.
///
/// `extended` must start on the same date as the observed calendar, agree
/// with it on every observed day, and cover the horizon. Each path draws
/// day `N+s` from `Normal(g_{N+s}(θ^(j)), σ²^(j))` rejected until
/// positive, with simulated days feeding back into the history window.
pub fn posterior_predict_flow<R: Rng>(
    draws: &PosteriorDraws,
    series: &FlowSeries,
    extended: &ServiceCalendar,
    order: usize,
    horizon: usize,
    draw_count: usize,
    rng: &mut R,
) -> Result<FlowPredictive, FlowError> {
    if order == 0 {
        return Err(FlowError::ZeroOrder);
    }
    if horizon == 0 {
        return Err(FlowError::CalendarMismatch("horizon must be >= 1".into()));
    }
    if draw_count == 0 {
        return Err(FlowError::MissingDrawParam { missing: "(no draws requested)".into() });
    }
    let n = series.len();
    if n < order {
        return Err(FlowError::SeriesTooShort { n, k: order });
    }
    if extended.start_date() != series.calendar().start_date() {
        return Err(FlowError::CalendarMismatch(format!(
            "extended calendar starts {}, series starts {}",
            extended.start_date(),
            series.calendar().start_date()
        )));
    }
    if extended.len() < n + horizon {
        return Err(FlowError::CalendarMismatch(format!(
            "extended calendar covers {} days, need {}",
            extended.len(),
            n + horizon
        )));
    }
    for i in 1..=n {
        if extended.day_type(i)? != series.calendar().day_type(i)? {
            return Err(FlowError::CalendarMismatch(format!(
                "day type differs from observed series on day {i}"
            )));
        }
    }

    let idx = flow_param_indices(draws)?;
    let rows = draws.thinned_rows(draw_count);
    let dates: Vec<NaiveDate> =
        (1..=horizon).map(|s| extended.date(n + s)).collect::<Result<_, _>>()?;

    let mut samples = Vec::with_capacity(rows.len());
    for (c, t) in rows {
        let p = params_from_row(draws.row(c, t), &idx)?;
        // History window: observed tail, then simulated days as they appear.
        let mut window: Vec<f64> = series.flows()[n - order..].to_vec();
        let mut path = Vec::with_capacity(horizon);
        for s in 1..=horizon {
            let i = n + s;
            let dt_i = extended.day_type(i)?;
            let mut acc = 0.0;
            for k in 1..=order {
                let dt_past = extended.day_type(i - k)?;
                acc += p.eta(dt_past) * window[order - k];
            }
            let y = positive_normal_draw(p.alpha(dt_i) * acc, p.sigma2_eps(), i, rng)?;
            window.remove(0);
            window.push(y);
            path.push(y);
        }
        samples.push(path);
    }
    Ok(FlowPredictive { dates, samples })
}

/// Fits the flow model by MCMC on the log scale of all six parameters.
///
/// Starts all chains from a moment-matched point: common level `ȳ-ratio`
/// for every α, unit η, and the residual variance at that point.
pub fn fit_flow_model(
    series: &FlowSeries,
    order: usize,
    range: LikelihoodRange,
    cfg: &McmcConfig,
) -> Result<McmcRun, FlowError> {
    let cache = FlowTargetCache::build(series, order, range)?;

    // Moment-matched starting point.
    let mut ratios = Vec::with_capacity(cache.rows.len());
    for &(y, _, sums) in &cache.rows {
        let total: f64 = sums.iter().sum();
        ratios.push(y / total);
    }
    let r0 = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let init_params = FlowParams::new(r0, r0, r0, 1.0, 1.0, 1.0)?;
    let residuals: Vec<f64> = cache
        .rows
        .iter()
        .map(|&(y, dt, sums)| {
            let alphas = [init_params.alpha_ord, init_params.alpha_sch, init_params.alpha_pwe];
            y - alphas[dt] * (sums[0] + sums[1] + sums[2])
        })
        .collect();
    let s2_0 = population_variance(&residuals).max(1e-4);
    let init = [r0, r0, r0, 1.0, 1.0, s2_0];

    let params: Vec<Param> = FLOW_PARAM_NAMES.iter().map(|n| Param::positive(*n)).collect();
    let target = move |x: &[f64]| match FlowParams::new(x[0], x[1], x[2], x[3], x[4], x[5]) {
        Ok(p) => cache.log_likelihood(&p) - p.sigma2_eps.ln(),
        Err(_) => f64::NEG_INFINITY,
    };
    Ok(mcmc::sample(target, &params, &init, cfg)?)
}
