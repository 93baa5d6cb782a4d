//! Evaluation protocol: the PE accuracy metric, weekly MSE aggregation,
//! train/test scenario construction, and sparse-wait pooling.
//!
//! PE(δ) is the fraction of observed waits lying strictly within δ
//! minutes of the posterior-predictive mean wait of their day/interval
//! cell. Flow accuracy is summarized by per-week mean squared error with
//! Monday-anchored weeks. Scenario splits cut a flow series or request
//! log into disjoint train/test ranges by date, and sparse-wait pooling
//! widens a test day's sample with prior same-weekday, same-day-type
//! observations.

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{CalendarError, ServiceCalendar};
use crate::flow::{FlowError, FlowSeries};
use crate::waiting::{IntervalGrid, RequestLog, WaitMatrix};

/// Evaluation errors.
#[derive(Debug, Error)]
pub enum EvalError {
    /// Observation and prediction shapes must agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Threshold must be non-negative.
    #[error("threshold delta must be >= 0, got {0}")]
    NegativeDelta(f64),
    /// Values entering a metric must be finite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Nothing to evaluate.
    #[error("empty input: {0}")]
    Empty(&'static str),
    /// Scenario date ranges must be ordered and non-degenerate.
    #[error("invalid scenario {label:?}: {reason}")]
    BadScenario { label: String, reason: String },
    /// Pooling window must cover at least one week.
    #[error("aggregation window must be >= 1 week, got {0}")]
    BadWindow(usize),
    /// Thresholds of a PE curve must be strictly increasing.
    #[error("PE curve thresholds must be strictly increasing at position {0}")]
    UnorderedThresholds(usize),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Observed waits grouped into day-by-interval cells; a cell may hold
/// any number of replicate observations, including none.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitCells {
    days: usize,
    intervals: usize,
    cells: Vec<Vec<f64>>,
}

impl WaitCells {
    /// An empty grid of `days` × `intervals` cells.
    pub fn new(days: usize, intervals: usize) -> Self {
        WaitCells { days, intervals, cells: vec![Vec::new(); days * intervals] }
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Appends one observation to cell `(i, s)` (both 1-based).
    pub fn push(&mut self, i: usize, s: usize, w: f64) -> Result<(), EvalError> {
        if i == 0 || i > self.days || s == 0 || s > self.intervals {
            return Err(EvalError::ShapeMismatch(format!(
                "cell ({i}, {s}) outside {} x {} grid",
                self.days, self.intervals
            )));
        }
        if !w.is_finite() {
            return Err(EvalError::NonFinite("observed wait"));
        }
        self.cells[(i - 1) * self.intervals + (s - 1)].push(w);
        Ok(())
    }

    /// Observations of cell `(i, s)` (both 1-based).
    pub fn cell(&self, i: usize, s: usize) -> &[f64] {
        &self.cells[(i - 1) * self.intervals + (s - 1)]
    }

    /// Total number of observations.
    pub fn total(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    /// Stacks simulator replicates: cell `(i, s)` receives one value per
    /// replicate matrix.
    pub fn from_replicates(replicates: &[WaitMatrix]) -> Result<Self, EvalError> {
        let first = replicates.first().ok_or(EvalError::Empty("replicate list"))?;
        let mut cells = WaitCells::new(first.days(), first.intervals());
        for rep in replicates {
            if rep.days() != first.days() || rep.intervals() != first.intervals() {
                return Err(EvalError::ShapeMismatch(format!(
                    "replicate {} x {} differs from {} x {}",
                    rep.days(),
                    rep.intervals(),
                    first.days(),
                    first.intervals()
                )));
            }
            for i in 1..=rep.days() {
                for s in 1..=rep.intervals() {
                    cells.push(i, s, rep.get(i, s))?;
                }
            }
        }
        Ok(cells)
    }
}

fn check_prediction_shape(
    observed: &WaitCells,
    predicted_mean: &[Vec<f64>],
) -> Result<(), EvalError> {
    if predicted_mean.len() != observed.days() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} prediction rows for {} observation days",
            predicted_mean.len(),
            observed.days()
        )));
    }
    for (i, row) in predicted_mean.iter().enumerate() {
        if row.len() != observed.intervals() {
            return Err(EvalError::ShapeMismatch(format!(
                "prediction row {} has {} intervals, expected {}",
                i + 1,
                row.len(),
                observed.intervals()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite("predicted mean"));
        }
    }
    Ok(())
}

/// Fraction of observed waits strictly within `delta` of their cell's
/// predictive mean:
/// `PE(δ) = (1/total) Σ_i Σ_s Σ_j 1{|mean_{i,s} − w_{i,s,j}| < δ}`.
pub fn pe_metric(
    observed: &WaitCells,
    predicted_mean: &[Vec<f64>],
    delta: f64,
) -> Result<f64, EvalError> {
    if !(delta >= 0.0) {
        return Err(EvalError::NegativeDelta(delta));
    }
    check_prediction_shape(observed, predicted_mean)?;
    let total = observed.total();
    if total == 0 {
        return Err(EvalError::Empty("observed waits"));
    }
    let mut hits = 0usize;
    for i in 1..=observed.days() {
        for s in 1..=observed.intervals() {
            let center = predicted_mean[i - 1][s - 1];
            hits += observed.cell(i, s).iter().filter(|&&w| (center - w).abs() < delta).count();
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Ordered `(δ, PE(δ))` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeCurve {
    points: Vec<(f64, f64)>,
}

impl PeCurve {
    /// Validates strictly increasing thresholds, PE within `[0, 1]`, and
    /// monotone nondecreasing PE.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, EvalError> {
        for (j, pair) in points.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(EvalError::UnorderedThresholds(j + 2));
            }
            if pair[1].1 < pair[0].1 {
                return Err(EvalError::ShapeMismatch(format!(
                    "PE decreases from {} to {} at threshold {}",
                    pair[0].1, pair[1].1, pair[1].0
                )));
            }
        }
        for &(delta, pe) in &points {
            if !(delta >= 0.0) {
                return Err(EvalError::NegativeDelta(delta));
            }
            if !(0.0..=1.0).contains(&pe) {
                return Err(EvalError::ShapeMismatch(format!("PE {pe} outside [0, 1]")));
            }
        }
        Ok(PeCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// PE at the largest threshold not exceeding `delta`.
    pub fn at(&self, delta: f64) -> Option<f64> {
        self.points.iter().rev().find(|&&(d, _)| d <= delta).map(|&(_, pe)| pe)
    }
}

/// Evaluates [`pe_metric`] over an ascending threshold grid.
pub fn pe_curve(
    observed: &WaitCells,
    predicted_mean: &[Vec<f64>],
    deltas: &[f64],
) -> Result<PeCurve, EvalError> {
    if deltas.is_empty() {
        return Err(EvalError::Empty("threshold grid"));
    }
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        points.push((delta, pe_metric(observed, predicted_mean, delta)?));
    }
    PeCurve::new(points)
}

/// Mean squared error of one Monday-anchored week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekMse {
    /// Monday of the week.
    pub week_start: NaiveDate,
    /// Days of the series falling in this week.
    pub days: usize,
    /// True when the week holds fewer than 7 series days.
    pub partial: bool,
    pub mse: f64,
}

/// Per-week mean squared error of aligned observed and predicted flows.
///
/// Series day `i` corresponds to calendar day `i`; weeks are anchored on
/// Mondays and weeks not fully covered by the series are flagged
/// `partial`.
pub fn weekly_mse(
    observed: &[f64],
    predicted: &[f64],
    cal: &ServiceCalendar,
) -> Result<Vec<WeekMse>, EvalError> {
    if observed.len() != predicted.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} observed vs {} predicted values",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(EvalError::Empty("flow series"));
    }
    if observed.len() > cal.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} series days exceed the {}-day calendar",
            observed.len(),
            cal.len()
        )));
    }
    if observed.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("flow series"));
    }
    let mut weeks: Vec<WeekMse> = Vec::new();
    let mut current: Option<(NaiveDate, f64, usize)> = None;
    for i in 1..=observed.len() {
        let date = cal.date(i)?;
        let monday = date - Days::new(date.weekday().num_days_from_monday() as u64);
        let e = observed[i - 1] - predicted[i - 1];
        match &mut current {
            Some((start, sum, n)) if *start == monday => {
                *sum += e * e;
                *n += 1;
            }
            _ => {
                if let Some((start, sum, n)) = current.take() {
                    weeks.push(WeekMse {
                        week_start: start,
                        days: n,
                        partial: n < 7,
                        mse: sum / n as f64,
                    });
                }
                current = Some((monday, e * e, 1));
            }
        }
    }
    if let Some((start, sum, n)) = current {
        weeks.push(WeekMse { week_start: start, days: n, partial: n < 7, mse: sum / n as f64 });
    }
    Ok(weeks)
}

/// Sum of the weekly MSE values, optionally skipping `burn_in_weeks`
/// leading weeks.
pub fn mse_sum(weeks: &[WeekMse], burn_in_weeks: usize) -> f64 {
    weeks.iter().skip(burn_in_weeks).map(|w| w.mse).sum()
}

/// A labeled train/test date split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl ScenarioSpec {
    fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: String| EvalError::BadScenario { label: self.label.clone(), reason };
        if self.train_end < self.train_start {
            return Err(bad(format!(
                "training range {} - {} is reversed",
                self.train_start, self.train_end
            )));
        }
        if self.test_end < self.test_start {
            return Err(bad(format!(
                "test range {} - {} is reversed",
                self.test_start, self.test_end
            )));
        }
        if self.test_start <= self.train_end {
            return Err(bad(format!(
                "test must start after training ends ({} <= {})",
                self.test_start, self.train_end
            )));
        }
        Ok(())
    }
}

/// A materialized flow scenario: disjoint train and test series.
#[derive(Debug, Clone)]
pub struct FlowScenario {
    pub label: String,
    pub train: FlowSeries,
    pub test: FlowSeries,
}

impl FlowScenario {
    /// Number of training days N.
    pub fn train_days(&self) -> usize {
        self.train.len()
    }

    /// Number of test days Ñ.
    pub fn test_days(&self) -> usize {
        self.test.len()
    }
}

/// Cuts a flow series into the scenario's train and test ranges.
pub fn scenario_split_flows(
    flows: &FlowSeries,
    spec: &ScenarioSpec,
) -> Result<FlowScenario, EvalError> {
    spec.validate()?;
    let cal = flows.calendar();
    let t0 = cal.index_of_date(spec.train_start)?;
    let t1 = cal.index_of_date(spec.train_end)?;
    let e0 = cal.index_of_date(spec.test_start)?;
    let e1 = cal.index_of_date(spec.test_end)?;
    Ok(FlowScenario {
        label: spec.label.clone(),
        train: flows.slice(t0, t1)?,
        test: flows.slice(e0, e1)?,
    })
}

/// A materialized wait scenario: request-log subsets with their counts.
#[derive(Debug, Clone)]
pub struct WaitScenario {
    pub label: String,
    pub train: RequestLog,
    pub test: RequestLog,
}

impl WaitScenario {
    pub fn train_count(&self) -> usize {
        self.train.total_observations()
    }

    pub fn test_count(&self) -> usize {
        self.test.total_observations()
    }
}

/// Cuts a request log into the scenario's train and test date ranges.
pub fn scenario_split_waits(
    log: &RequestLog,
    spec: &ScenarioSpec,
) -> Result<WaitScenario, EvalError> {
    spec.validate()?;
    Ok(WaitScenario {
        label: spec.label.clone(),
        train: log.restrict(spec.train_start, spec.train_end),
        test: log.restrict(spec.test_start, spec.test_end),
    })
}

/// Waits pooled around a target day to counter sparsity.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledWaits {
    /// Pooled observations from the matching prior days.
    pub waits: Vec<f64>,
    /// Dates whose observations were pooled; these days must be removed
    /// from any training set used alongside this pool.
    pub pooled_days: Vec<NaiveDate>,
    /// True when no matching prior day held an observation.
    pub empty: bool,
}

/// Pools interval-`s` waits from prior days with the same weekday and
/// day type as day `i`, looking back `weeks` whole weeks.
///
/// A same-weekday day sits a multiple of 7 back, so the window inspects
/// offsets `{7, 14, …, 7·weeks}` and keeps those with matching day type.
/// An empty pool is flagged, not an error.
pub fn aggregate_sparse_waits(
    log: &RequestLog,
    cal: &ServiceCalendar,
    grid: &IntervalGrid,
    i: usize,
    s: usize,
    weeks: usize,
) -> Result<PooledWaits, EvalError> {
    if weeks == 0 {
        return Err(EvalError::BadWindow(weeks));
    }
    if s == 0 || s > grid.count() {
        return Err(EvalError::ShapeMismatch(format!(
            "interval {s} outside 1..={}",
            grid.count()
        )));
    }
    let dt = cal.day_type(i)?;
    let mut waits = Vec::new();
    let mut pooled_days = Vec::new();
    for week in 1..=weeks {
        let k = 7 * week;
        if k >= i {
            break;
        }
        let day = i - k;
        if cal.day_type(day)? != dt {
            continue;
        }
        let date = cal.date(day)?;
        pooled_days.push(date);
        if let Some(entry) = log.days().iter().find(|d| d.date == date) {
            for (&t, &w) in entry.request_minutes.iter().zip(&entry.pseudo_waits) {
                let in_interval = grid
                    .interval_of(t)
                    .map_err(|e| EvalError::ShapeMismatch(e.to_string()))?
                    == s;
                if in_interval {
                    waits.push(w);
                }
            }
        }
    }
    let empty = waits.is_empty();
    Ok(PooledWaits { waits, pooled_days, empty })
}
