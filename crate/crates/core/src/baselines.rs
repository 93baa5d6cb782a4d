//! Comparison forecasters for daily driver flow.
//!
//! Two reference models sit beside the Bayesian moving-average model:
//!
//! * **BASE**, a frequentist multi-level average: a non-holiday day is
//!   predicted by the mean of all prior same-weekday flows, a holiday by
//!   the mean of all prior holiday flows.
//! * **PROP**, an additive trend + seasonality + holiday model
//!   `y_i = g(i) + s(i) + h(i) + ε_i` with a piecewise-linear continuous
//!   trend, Fourier seasonality, and day-type indicator effects, fitted
//!   by penalized least squares.
//!
//! Both are deterministic: BASE needs no fitting at all, PROP solves a
//! fixed optimization problem, so repeated fits of the same data yield
//! identical parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{CalendarError, CollapsedDayType, DayType, ServiceCalendar};

/// Baseline and additive-model errors.
#[derive(Debug, Error)]
pub enum BaselineError {
    /// No prior day of the required class exists yet.
    #[error("cannot predict day {index}: no prior {class} day observed (cold start)")]
    ColdStart { index: usize, class: &'static str },
    /// Day index outside the calendar.
    #[error("day index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    /// Observed flows cannot outnumber calendar days.
    #[error("{flows} observed flows exceed the {days}-day calendar")]
    FlowsExceedCalendar { flows: usize, days: usize },
    /// Flows must be finite.
    #[error("flow at day {index} is not finite")]
    NonFiniteFlow { index: usize },
    /// Changepoint locations must be strictly increasing positive indices.
    #[error("changepoints must be strictly increasing and >= 2, violated at position {0}")]
    BadChangepoints(usize),
    /// Per-changepoint vectors must align.
    #[error("expected {expected} growth adjustments, found {found}")]
    DeltaCount { expected: usize, found: usize },
    /// Fourier cycles need a positive period and at least one term.
    #[error("fourier cycle {index}: period must be > 0 and order >= 1")]
    BadFourierCycle { index: usize },
    /// Invalid fit configuration.
    #[error("invalid fit configuration: {0}")]
    BadConfig(String),
    /// Too few observations for the requested design.
    #[error("need at least {needed} observations to fit {needed} free parameters, have {have}")]
    TooFewObservations { needed: usize, have: usize },
    #[error(transparent)]
    Calendar(#[from] CalendarError),
}

/// Multi-level averaging prediction for day `i` (1-based calendar index).
///
/// `flows` holds the observed days `1..=flows.len()`, which may be fewer
/// than the calendar covers when predicting a future day. A non-holiday
/// day averages all observed prior flows on the same weekday; a holiday
/// averages all observed prior holiday flows.
pub fn baseline_predict(
    cal: &ServiceCalendar,
    flows: &[f64],
    i: usize,
) -> Result<f64, BaselineError> {
    if i == 0 || i > cal.len() {
        return Err(BaselineError::IndexOutOfRange { index: i, len: cal.len() });
    }
    if flows.len() > cal.len() {
        return Err(BaselineError::FlowsExceedCalendar { flows: flows.len(), days: cal.len() });
    }
    let (offsets, class) = if cal.collapsed_day_type(i)? == CollapsedDayType::Hol {
        (cal.prior_holiday_set(i)?, "holiday")
    } else {
        (cal.prior_same_weekday_set(i)?, "same-weekday")
    };
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in offsets {
        let day = i - k;
        if day <= flows.len() {
            let y = flows[day - 1];
            if !y.is_finite() {
                return Err(BaselineError::NonFiniteFlow { index: day });
            }
            sum += y;
            n += 1;
        }
    }
    if n == 0 {
        return Err(BaselineError::ColdStart { index: i, class });
    }
    Ok(sum / n as f64)
}

/// One seasonal cycle: Fourier coefficients `(a_ℓ, b_ℓ)` for
/// `ℓ = 1..=order` at period `P` days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCycle {
    pub period: f64,
    /// `(cos, sin)` coefficient pairs, index ℓ−1.
    pub coeffs: Vec<(f64, f64)>,
}

impl FourierCycle {
    fn validate(&self, index: usize) -> Result<(), BaselineError> {
        if !(self.period > 0.0) || self.coeffs.is_empty() {
            return Err(BaselineError::BadFourierCycle { index });
        }
        Ok(())
    }
}

/// Additive-model parameters.
///
/// The trend is `g(i) = (k + a(i)ᵀδ)·i + (m + a(i)ᵀγ)` where the
/// indicator `a_l(i) = 1{i ≥ s_l}` switches on growth adjustment `δ_l`
/// at changepoint `s_l`. The continuity offsets are not free: the
/// constructor derives `γ_l = −s_l·δ_l`, which makes `g` continuous at
/// every changepoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProphetParams {
    k: f64,
    m: f64,
    changepoints: Vec<usize>,
    delta_growth: Vec<f64>,
    gamma_cont: Vec<f64>,
    fourier: Vec<FourierCycle>,
    kappa: [f64; 2],
}

impl ProphetParams {
    /// Builds a parameter set, deriving the continuity offsets.
    pub fn new(
        k: f64,
        m: f64,
        changepoints: Vec<usize>,
        delta_growth: Vec<f64>,
        fourier: Vec<FourierCycle>,
        kappa: [f64; 2],
    ) -> Result<Self, BaselineError> {
        for (j, pair) in changepoints.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(BaselineError::BadChangepoints(j + 2));
            }
        }
        if changepoints.first().is_some_and(|&s| s < 2) {
            return Err(BaselineError::BadChangepoints(1));
        }
        if delta_growth.len() != changepoints.len() {
            return Err(BaselineError::DeltaCount {
                expected: changepoints.len(),
                found: delta_growth.len(),
            });
        }
        for (j, c) in fourier.iter().enumerate() {
            c.validate(j + 1)?;
        }
        let gamma_cont =
            changepoints.iter().zip(&delta_growth).map(|(&s, &d)| -(s as f64) * d).collect();
        Ok(ProphetParams { k, m, changepoints, delta_growth, gamma_cont, fourier, kappa })
    }

    pub fn growth_rate(&self) -> f64 {
        self.k
    }

    pub fn offset(&self) -> f64 {
        self.m
    }

    pub fn changepoints(&self) -> &[usize] {
        &self.changepoints
    }

    pub fn delta_growth(&self) -> &[f64] {
        &self.delta_growth
    }

    /// Continuity offsets `γ_l = −s_l·δ_l`.
    pub fn gamma_cont(&self) -> &[f64] {
        &self.gamma_cont
    }

    pub fn fourier(&self) -> &[FourierCycle] {
        &self.fourier
    }

    /// Holiday weights `(κ_SCH, κ_PWE)`.
    pub fn kappa(&self) -> [f64; 2] {
        self.kappa
    }

    /// Holiday indicator vector `(1{DT=SCH}, 1{DT=PWE})` of day `i`.
    pub fn holiday_indicators(dt: DayType) -> [f64; 2] {
        match dt {
            DayType::Ord => [0.0, 0.0],
            DayType::Sch => [1.0, 0.0],
            DayType::Pwe => [0.0, 1.0],
        }
    }
}

/// Piecewise-linear trend `g(i)`, continuous at every changepoint.
pub fn prophet_trend(p: &ProphetParams, i: usize) -> f64 {
    let t = i as f64;
    let mut slope = p.k;
    let mut intercept = p.m;
    for (l, &s) in p.changepoints.iter().enumerate() {
        if i >= s {
            slope += p.delta_growth[l];
            intercept += p.gamma_cont[l];
        }
    }
    slope * t + intercept
}

/// Fourier seasonality `s(i)` summed over all configured cycles.
pub fn prophet_seasonal(p: &ProphetParams, i: usize) -> f64 {
    let t = i as f64;
    p.fourier
        .iter()
        .map(|cycle| {
            cycle
                .coeffs
                .iter()
                .enumerate()
                .map(|(idx, &(a, b))| {
                    let angle = 2.0 * std::f64::consts::PI * (idx + 1) as f64 * t / cycle.period;
                    a * angle.cos() + b * angle.sin()
                })
                .sum::<f64>()
        })
        .sum()
}

/// Holiday effect `h(i)ᵀκ` of day `i`.
pub fn prophet_holiday(
    p: &ProphetParams,
    cal: &ServiceCalendar,
    i: usize,
) -> Result<f64, BaselineError> {
    let ind = ProphetParams::holiday_indicators(cal.day_type(i)?);
    Ok(ind[0] * p.kappa[0] + ind[1] * p.kappa[1])
}

/// Additive prediction `g(i) + s(i) + h(i)`.
pub fn prophet_predict(
    p: &ProphetParams,
    cal: &ServiceCalendar,
    i: usize,
) -> Result<f64, BaselineError> {
    Ok(prophet_trend(p, i) + prophet_seasonal(p, i) + prophet_holiday(p, cal, i)?)
}

/// Fit configuration for the additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProphetConfig {
    /// Candidate changepoints placed uniformly over the first
    /// `changepoint_range` share of the training days.
    pub changepoint_count: usize,
    /// Fraction of the training range eligible for changepoints.
    pub changepoint_range: f64,
    /// Weight λ of the smoothed-L1 penalty on the growth adjustments.
    pub delta_penalty: f64,
    /// Weekly cycle (period 7, order 3).
    pub weekly: bool,
    /// Yearly cycle (period 365.25, order 10).
    pub yearly: bool,
    /// Estimate the holiday weights instead of fixing them at 1.
    pub fit_kappa: bool,
}

impl Default for ProphetConfig {
    fn default() -> Self {
        ProphetConfig {
            changepoint_count: 25,
            changepoint_range: 0.8,
            delta_penalty: 1.0,
            weekly: true,
            yearly: true,
            fit_kappa: false,
        }
    }
}

const WEEKLY_PERIOD: f64 = 7.0;
const WEEKLY_ORDER: usize = 3;
const YEARLY_PERIOD: f64 = 365.25;
const YEARLY_ORDER: usize = 10;

/// Smoothing width of the L1 surrogate `√(δ² + ε²)`.
const L1_EPS: f64 = 1e-8;

impl ProphetConfig {
    fn validate(&self) -> Result<(), BaselineError> {
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(BaselineError::BadConfig(format!(
                "changepoint_range {} outside (0, 1]",
                self.changepoint_range
            )));
        }
        if !(self.delta_penalty >= 0.0) {
            return Err(BaselineError::BadConfig(format!(
                "delta_penalty {} must be >= 0",
                self.delta_penalty
            )));
        }
        Ok(())
    }

    /// Uniformly spaced changepoint indices within the first
    /// `changepoint_range` share of `n` days, deduplicated, all ≥ 2.
    pub fn changepoint_grid(&self, n: usize) -> Vec<usize> {
        let horizon = self.changepoint_range * n as f64;
        let mut grid = Vec::with_capacity(self.changepoint_count);
        for l in 1..=self.changepoint_count {
            let s = (l as f64 * horizon / (self.changepoint_count + 1) as f64).round() as usize;
            if s >= 2 && grid.last() != Some(&s) {
                grid.push(s);
            }
        }
        grid
    }

    fn cycles(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        if self.weekly {
            out.push((WEEKLY_PERIOD, WEEKLY_ORDER));
        }
        if self.yearly {
            out.push((YEARLY_PERIOD, YEARLY_ORDER));
        }
        out
    }
}

/// Design-matrix layout shared by the fit and its tests.
struct Design {
    changepoints: Vec<usize>,
    cycles: Vec<(f64, usize)>,
    fit_kappa: bool,
}

impl Design {
    /// Columns: intercept, day index, one hinge per changepoint, two
    /// columns per Fourier term, then SCH/PWE indicators when κ is free.
    fn width(&self) -> usize {
        2 + self.changepoints.len()
            + 2 * self.cycles.iter().map(|&(_, order)| order).sum::<usize>()
            + if self.fit_kappa { 2 } else { 0 }
    }

    fn row(&self, cal: &ServiceCalendar, i: usize, out: &mut [f64]) -> Result<(), BaselineError> {
        let t = i as f64;
        let mut c = 0;
        out[c] = 1.0;
        c += 1;
        out[c] = t;
        c += 1;
        for &s in &self.changepoints {
            out[c] = if i >= s { t - s as f64 } else { 0.0 };
            c += 1;
        }
        for &(period, order) in &self.cycles {
            for l in 1..=order {
                let angle = 2.0 * std::f64::consts::PI * l as f64 * t / period;
                out[c] = angle.cos();
                out[c + 1] = angle.sin();
                c += 2;
            }
        }
        if self.fit_kappa {
            let ind = ProphetParams::holiday_indicators(cal.day_type(i)?);
            out[c] = ind[0];
            out[c + 1] = ind[1];
        }
        Ok(())
    }
}

/// Fits the additive model by penalized least squares.
///
/// The trend hinges carry a smoothed-L1 penalty
/// `λ Σ √(δ_l² + ε²)` minimized by iteratively reweighted ridge steps;
/// all other coefficients are unpenalized. A rank-deficient normal
/// system falls back to an escalating ridge with a logged notice rather
/// than failing.
pub fn prophet_fit(
    cal: &ServiceCalendar,
    flows: &[f64],
    config: &ProphetConfig,
) -> Result<ProphetParams, BaselineError> {
    config.validate()?;
    let n = flows.len();
    if n > cal.len() {
        return Err(BaselineError::FlowsExceedCalendar { flows: n, days: cal.len() });
    }
    for (j, y) in flows.iter().enumerate() {
        if !y.is_finite() {
            return Err(BaselineError::NonFiniteFlow { index: j + 1 });
        }
    }
    let design = Design {
        changepoints: config.changepoint_grid(n),
        cycles: config.cycles(),
        fit_kappa: config.fit_kappa,
    };
    let width = design.width();
    if n < width {
        return Err(BaselineError::TooFewObservations { needed: width, have: n });
    }

    let mut x = DMatrix::zeros(n, width);
    let mut target = DVector::zeros(n);
    let mut row = vec![0.0; width];
    for i in 1..=n {
        design.row(cal, i, &mut row)?;
        for (c, &v) in row.iter().enumerate() {
            x[(i - 1, c)] = v;
        }
        let mut y = flows[i - 1];
        if !config.fit_kappa {
            // Fixed all-ones holiday weights enter as a known offset.
            let ind = ProphetParams::holiday_indicators(cal.day_type(i)?);
            y -= ind[0] + ind[1];
        }
        target[i - 1] = y;
    }

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * target;
    let delta_cols = 2..2 + design.changepoints.len();

    // Iteratively reweighted ridge: the smoothed-L1 penalty on δ is
    // majorized by λ δ² / (2·√(δ_old² + ε²)).
    let mut theta: DVector<f64> = DVector::zeros(width);
    let mut ridge_notice = false;
    for iteration in 0..200 {
        let mut system = xtx.clone();
        if config.delta_penalty > 0.0 {
            for c in delta_cols.clone() {
                let w = (theta[c] * theta[c] + L1_EPS * L1_EPS).sqrt();
                system[(c, c)] += config.delta_penalty / (2.0 * w.max(L1_EPS));
            }
        }
        let mut ridge = 0.0;
        let next = loop {
            let mut attempt = system.clone();
            for c in 0..width {
                attempt[(c, c)] += ridge;
            }
            if let Some(chol) = attempt.cholesky() {
                break chol.solve(&xty);
            }
            ridge = if ridge == 0.0 { 1e-8 } else { ridge * 100.0 };
            if !ridge_notice {
                log::warn!("rank-deficient design: adding ridge {ridge:.1e} to stabilize the fit");
                ridge_notice = true;
            }
            if ridge > 1.0 {
                return Err(BaselineError::BadConfig(
                    "normal equations unsolvable even with heavy ridge".into(),
                ));
            }
        };
        let step = (&next - &theta).norm();
        theta = next;
        if config.delta_penalty == 0.0 || step < 1e-12 {
            break;
        }
        if iteration == 199 {
            log::warn!("growth-adjustment reweighting hit the iteration cap; using last iterate");
        }
    }

    let mut c = 2 + design.changepoints.len();
    let delta: Vec<f64> = (2..c).map(|j| theta[j]).collect();
    let mut fourier = Vec::new();
    for &(period, order) in &design.cycles {
        let mut coeffs = Vec::with_capacity(order);
        for _ in 0..order {
            coeffs.push((theta[c], theta[c + 1]));
            c += 2;
        }
        fourier.push(FourierCycle { period, coeffs });
    }
    let kappa = if config.fit_kappa { [theta[c], theta[c + 1]] } else { [1.0, 1.0] };
    ProphetParams::new(theta[1], theta[0], design.changepoints, delta, fourier, kappa)
}
