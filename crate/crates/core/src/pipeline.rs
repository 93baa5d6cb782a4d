//! Command implementations behind the CLI.
//!
//! Each command reads its inputs from, and writes its outputs to, the
//! configured output directory, so every stage is re-runnable from the
//! on-disk artifacts alone. All randomness flows from the single run
//! seed through named substreams (`flow-sim`, `wait-sim`, `fit-flow`,
//! `fit-wait`, `predict-flow`, `predict-wait`), which makes reruns with
//! the same configuration byte-identical.
//!
//! Artifacts:
//! * `calendar.csv`, `flows.csv`, `waits.csv`, `manifest.json` from
//!   `simulate`
//! * `flow_draws.csv` + `flow_diagnostics.json` from `fit-flow`
//! * `wait_draws.csv` + `wait_diagnostics.json` from `fit-wait`
//! * `predictive_flows.csv` from `predict-flow`
//! * `predictive_waits.csv` from `predict-wait`
//! * `metrics.json` from `evaluate`
//! * `train_flows.csv`, `test_flows.csv`, optional wait splits, and
//!   `scenario.json` from `scenario`

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{baseline_predict, prophet_fit, prophet_predict, BaselineError};
use crate::calendar::{CalendarError, ServiceCalendar};
use crate::config::{ConfigError, ModelKind, NuMode, RunConfig};
use crate::eval::{
    mse_sum, pe_curve, scenario_split_flows, scenario_split_waits, weekly_mse, EvalError, PeCurve,
    WaitCells, WeekMse,
};
use crate::flow::{
    fit_flow_model, posterior_predict_flow, simulate_flow_daytypes, FlowError, FlowSeries,
};
use crate::io::{
    read_calendar, read_draws, read_flow_series, read_json, read_predictive_flows, read_waits,
    write_calendar, write_draws, write_flows, write_json, write_predictive_flows,
    write_predictive_waits, write_waits, DiagnosticsReport, IoError, Manifest, PredictiveFlowRow,
    PredictiveWaitRow,
};
use crate::mcmc::McmcError;
use crate::rng::{substream_rng, substream_seed};
use crate::waiting::{
    estimate_nu_moments, fit_wait_model, predict_wait_marginal, waits_given_flows, DayWaits,
    IntervalGrid, RequestLog, WaitError,
};

/// Artifact file names within the output directory.
pub mod files {
    pub const CALENDAR: &str = "calendar.csv";
    pub const FLOWS: &str = "flows.csv";
    pub const WAITS: &str = "waits.csv";
    pub const MANIFEST: &str = "manifest.json";
    pub const FLOW_DRAWS: &str = "flow_draws.csv";
    pub const FLOW_DIAGNOSTICS: &str = "flow_diagnostics.json";
    pub const WAIT_DRAWS: &str = "wait_draws.csv";
    pub const WAIT_DIAGNOSTICS: &str = "wait_diagnostics.json";
    pub const PREDICTIVE_FLOWS: &str = "predictive_flows.csv";
    pub const PREDICTIVE_WAITS: &str = "predictive_waits.csv";
    pub const METRICS: &str = "metrics.json";
    pub const TRAIN_FLOWS: &str = "train_flows.csv";
    pub const TEST_FLOWS: &str = "test_flows.csv";
    pub const TRAIN_WAITS: &str = "train_waits.csv";
    pub const TEST_WAITS: &str = "test_waits.csv";
    pub const SCENARIO: &str = "scenario.json";
}

/// Pipeline failures; `kind` gives a stable machine-readable tag.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Wait(#[from] WaitError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error("config lacks the `{0}` section required by this command")]
    MissingSection(&'static str),
    #[error("training series has {n} days; the model of order {order} needs more than {order}")]
    TooFewDays { n: usize, order: usize },
    #[error("no wait observations in the training window")]
    NoWaitData,
    #[error("missing input artifact {path}; run the producing command first")]
    MissingArtifact { path: PathBuf },
    #[error("calendar covers {have} days but prediction needs {need}")]
    CalendarTooShort { have: usize, need: usize },
    #[error("predictive flow file holds no sampled rows (draw >= 1)")]
    NoSampledFlows,
    #[error("cannot create output directory {path}: {source}")]
    CreateDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Stable tag for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io(_) => "io",
            PipelineError::Calendar(_) => "calendar",
            PipelineError::Flow(_) => "flow",
            PipelineError::Wait(_) => "wait",
            PipelineError::Baseline(_) => "baseline",
            PipelineError::Eval(_) => "eval",
            PipelineError::Mcmc(_) => "mcmc",
            PipelineError::MissingSection(_) => "missing_section",
            PipelineError::TooFewDays { .. } => "too_few_days",
            PipelineError::NoWaitData => "no_wait_data",
            PipelineError::MissingArtifact { .. } => "missing_artifact",
            PipelineError::CalendarTooShort { .. } => "calendar_too_short",
            PipelineError::NoSampledFlows => "no_sampled_flows",
            PipelineError::CreateDir { .. } => "create_dir",
        }
    }
}

/// What a command did, for the CLI to print. Warnings (such as high
/// split-R̂) annotate the run without failing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdReport {
    pub summary: String,
    pub warnings: Vec<String>,
}

impl CmdReport {
    fn new(summary: String) -> Self {
        CmdReport { summary, warnings: Vec::new() }
    }
}

/// Run-level manifest: the seed and every parameter that shaped the run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

/// Wait-fit report: shape, interval identifiability, and convergence.
#[derive(Debug, Serialize, Deserialize)]
pub struct WaitFitReport {
    /// Shape ν the regression was run at.
    pub nu: f64,
    /// 1-based intervals with observations.
    pub identified: Vec<usize>,
    /// 1-based intervals without observations.
    pub unidentified: Vec<usize>,
    pub diagnostics: DiagnosticsReport,
}

/// Per-model flow accuracy over Monday-anchored weeks.
#[derive(Debug, Serialize, Deserialize)]
pub struct FlowModelMetrics {
    pub model: ModelKind,
    pub weeks: Vec<WeekMse>,
    /// Sum of weekly MSEs after skipping the configured burn-in weeks.
    pub mse_sum: f64,
    /// Sum over all weeks.
    pub mse_sum_total: f64,
}

/// Wait accuracy: the PE curve over the configured threshold grid.
#[derive(Debug, Serialize, Deserialize)]
pub struct WaitMetrics {
    pub pe_curve: PeCurve,
    /// Observed waits entering the metric.
    pub observations: usize,
}

/// Contents of `metrics.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Option<String>,
    pub burn_in_weeks: usize,
    pub flow: Vec<FlowModelMetrics>,
    pub wait: Option<WaitMetrics>,
}

/// Contents of `scenario.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub label: String,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub train_days: usize,
    pub test_days: usize,
    pub train_wait_observations: Option<usize>,
    pub test_wait_observations: Option<usize>,
}

fn manifest_of(cfg: &RunConfig) -> Manifest {
    Manifest::new(cfg.config_hash(), cfg.seed)
}

fn artifact(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn require(path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { path })
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|source| PipelineError::CreateDir { path: cfg.out_dir.clone(), source })
}

fn load_series(cfg: &RunConfig) -> Result<(ServiceCalendar, FlowSeries), PipelineError> {
    let cal = read_calendar(&require(artifact(cfg, files::CALENDAR))?)?;
    let series = read_flow_series(&require(artifact(cfg, files::FLOWS))?, &cal)?;
    Ok((cal, series))
}

/// Training window of the series: the scenario's train slice when a
/// scenario is configured, otherwise the whole series.
fn train_flows(cfg: &RunConfig, full: &FlowSeries) -> Result<FlowSeries, PipelineError> {
    match &cfg.scenario {
        Some(spec) => Ok(scenario_split_flows(full, spec)?.train),
        None => Ok(full.clone()),
    }
}

fn train_waits(cfg: &RunConfig, log: &RequestLog) -> Result<RequestLog, PipelineError> {
    match &cfg.scenario {
        Some(spec) => Ok(scenario_split_waits(log, spec)?.train),
        None => Ok(log.clone()),
    }
}

/// Generates the synthetic dataset: daily flows by day-type dispatch,
/// then J wait replicates per day and interval. Writes `calendar.csv`,
/// `flows.csv`, `waits.csv`, and `manifest.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let sim = cfg.simulate.as_ref().ok_or(PipelineError::MissingSection("simulate"))?;
    let cal = ServiceCalendar::from_rules(
        sim.start_date,
        sim.days,
        &sim.school_holidays,
        &sim.public_holidays,
    )?;
    let params = sim.flow.to_params()?;
    let grid = IntervalGrid::new(cfg.intervals)?;

    let mut flow_rng = substream_rng(cfg.seed, "flow-sim");
    let flows = simulate_flow_daytypes(&cal, &params, cfg.order, sim.init_mean, &mut flow_rng)?;
    let mut wait_rng = substream_rng(cfg.seed, "wait-sim");
    let mats =
        waits_given_flows(&flows, sim.nu, &sim.beta, sim.replicates, &grid, &mut wait_rng)?;

    // Event-level wait rows: replicate j of interval s gets a synthetic
    // request time placed strictly inside the interval, so the file
    // round-trips through the same schema as observational data.
    let width = grid.width_minutes();
    let mut days = Vec::with_capacity(cal.len());
    for i in 1..=cal.len() {
        let count = grid.count() * sim.replicates;
        let mut request_minutes = Vec::with_capacity(count);
        let mut pseudo_waits = Vec::with_capacity(count);
        for s in 1..=grid.count() {
            let (lo, _) = grid.bounds(s)?;
            for j in 0..sim.replicates {
                request_minutes.push(lo + (j + 1) as f64 * width / (sim.replicates + 1) as f64);
                pseudo_waits.push(mats[j].get(i, s));
            }
        }
        days.push(DayWaits {
            date: cal.date(i)?,
            request_minutes,
            pseudo_waits,
            arrivals: None,
            perceived: None,
        });
    }
    let log = RequestLog::new(days)?;
    let series = FlowSeries::new(cal.clone(), flows)?;

    ensure_out_dir(cfg)?;
    let m = manifest_of(cfg);
    write_calendar(&artifact(cfg, files::CALENDAR), &cal, &m)?;
    write_flows(&artifact(cfg, files::FLOWS), &series, &m)?;
    write_waits(&artifact(cfg, files::WAITS), &log, &m)?;
    write_json(
        &artifact(cfg, files::MANIFEST),
        &RunManifest { config_hash: m.config_hash.clone(), seed: cfg.seed, config: cfg.clone() },
    )?;

    Ok(CmdReport::new(format!(
        "simulated {} days, {} wait observations ({} intervals x {} replicates)",
        cal.len(),
        log.total_observations(),
        grid.count(),
        sim.replicates,
    )))
}

/// Fits the daily-flow model on the training window and writes
/// `flow_draws.csv` plus `flow_diagnostics.json`.
pub fn cmd_fit_flow(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let (_cal, full) = load_series(cfg)?;
    let train = train_flows(cfg, &full)?;
    let n = train.len();
    if n <= cfg.order {
        return Err(PipelineError::TooFewDays { n, order: cfg.order });
    }
    let mcfg = cfg.mcmc.to_mcmc_config(substream_seed(cfg.seed, "fit-flow"));
    let run = fit_flow_model(&train, cfg.order, cfg.likelihood_range, &mcfg)?;

    ensure_out_dir(cfg)?;
    let m = manifest_of(cfg);
    write_draws(&artifact(cfg, files::FLOW_DRAWS), &run.draws, &m)?;
    let report = DiagnosticsReport::from_diagnostics(&run.diagnostics);
    write_json(&artifact(cfg, files::FLOW_DIAGNOSTICS), &report)?;

    let mut out = CmdReport::new(format!(
        "fit flow model on {n} training days: {} draws across {} chains",
        run.draws.total_draws(),
        run.draws.chains(),
    ));
    out.warnings = report.warnings;
    Ok(out)
}

/// Fits the wait regression on the training window and writes
/// `wait_draws.csv` plus `wait_diagnostics.json`.
pub fn cmd_fit_wait(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let (_cal, full) = load_series(cfg)?;
    let train = train_flows(cfg, &full)?;
    let log = read_waits(&require(artifact(cfg, files::WAITS))?)?;
    let train_log = train_waits(cfg, &log)?;
    if train_log.total_observations() == 0 {
        return Err(PipelineError::NoWaitData);
    }
    let grid = IntervalGrid::new(cfg.intervals)?;
    let nu = match cfg.nu_mode {
        NuMode::Fixed { value } => value,
        NuMode::Moments => estimate_nu_moments(&train, &train_log, &grid)?,
    };
    let mcfg = cfg.mcmc.to_mcmc_config(substream_seed(cfg.seed, "fit-wait"));
    let fit = fit_wait_model(&train, &train_log, &grid, nu, &cfg.beta_prior, &mcfg)?;

    ensure_out_dir(cfg)?;
    let m = manifest_of(cfg);
    write_draws(&artifact(cfg, files::WAIT_DRAWS), &fit.draws, &m)?;
    let report = WaitFitReport {
        nu: fit.nu,
        identified: fit.identified.clone(),
        unidentified: fit.unidentified.clone(),
        diagnostics: DiagnosticsReport::from_diagnostics(&fit.diagnostics),
    };
    write_json(&artifact(cfg, files::WAIT_DIAGNOSTICS), &report)?;

    let mut out = CmdReport::new(format!(
        "fit wait model at nu = {:.4} on {} observations: {} identified intervals, {} without data",
        fit.nu,
        train_log.total_observations(),
        fit.identified.len(),
        fit.unidentified.len(),
    ));
    out.warnings = report.diagnostics.warnings;
    Ok(out)
}

/// Forecast window: the day after training through the scenario's test
/// end, or the configured horizon when no scenario is set.
fn forecast_span(cfg: &RunConfig, cal: &ServiceCalendar, train: &FlowSeries) -> Result<(usize, usize), PipelineError> {
    let t_start = cal
        .index_of(train.calendar().start_date())
        .expect("training window lies within the calendar");
    let n = train.len();
    let horizon = match &cfg.scenario {
        Some(spec) => {
            let e1 = cal.index_of_date(spec.test_end)?;
            e1 - (t_start - 1 + n)
        }
        None => cfg.predict.horizon,
    };
    let need = t_start - 1 + n + horizon;
    if cal.len() < need {
        return Err(PipelineError::CalendarTooShort { have: cal.len(), need });
    }
    Ok((t_start, horizon))
}

/// Predicts daily flows over the forecast window for every configured
/// model and writes `predictive_flows.csv`; sampled rows carry
/// `draw >= 1`, point predictions `draw = 0`.
pub fn cmd_predict_flow(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let (cal, full) = load_series(cfg)?;
    let train = train_flows(cfg, &full)?;
    let n = train.len();
    if n <= cfg.order {
        return Err(PipelineError::TooFewDays { n, order: cfg.order });
    }
    let (t_start, horizon) = forecast_span(cfg, &cal, &train)?;
    // Calendar from the training start through the end of the data
    // range; indices below are relative to this sub-calendar.
    let extended = cal.slice(t_start, cal.len())?;

    let mut rows: Vec<PredictiveFlowRow> = Vec::new();
    for &model in &cfg.models {
        match model {
            ModelKind::Bhml => {
                let draws = read_draws(&require(artifact(cfg, files::FLOW_DRAWS))?)?;
                let mut rng = substream_rng(cfg.seed, "predict-flow");
                let pred = posterior_predict_flow(
                    &draws,
                    &train,
                    &extended,
                    cfg.order,
                    horizon,
                    cfg.predict.draws,
                    &mut rng,
                )?;
                for (j, path) in pred.samples.iter().enumerate() {
                    for (date, &flow) in pred.dates.iter().zip(path) {
                        rows.push(PredictiveFlowRow {
                            draw: j + 1,
                            date: *date,
                            flow,
                            model: model.as_str().to_string(),
                        });
                    }
                }
            }
            ModelKind::Base => {
                for h in 1..=horizon {
                    let i = n + h;
                    rows.push(PredictiveFlowRow {
                        draw: 0,
                        date: extended.date(i)?,
                        flow: baseline_predict(&extended, train.flows(), i)?,
                        model: model.as_str().to_string(),
                    });
                }
            }
            ModelKind::Prop => {
                let params = prophet_fit(&extended, train.flows(), &cfg.prophet)?;
                for h in 1..=horizon {
                    let i = n + h;
                    rows.push(PredictiveFlowRow {
                        draw: 0,
                        date: extended.date(i)?,
                        flow: prophet_predict(&params, &extended, i)?,
                        model: model.as_str().to_string(),
                    });
                }
            }
        }
    }

    ensure_out_dir(cfg)?;
    write_predictive_flows(&artifact(cfg, files::PREDICTIVE_FLOWS), &rows, &manifest_of(cfg))?;
    Ok(CmdReport::new(format!(
        "predicted {horizon} days for {} models ({} rows)",
        cfg.models.len(),
        rows.len(),
    )))
}

/// Predicts sub-daily waits over the forecast window by pairing each
/// rate draw with one sampled flow path, and writes
/// `predictive_waits.csv` for the identified intervals.
pub fn cmd_predict_wait(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let wait_draws = read_draws(&require(artifact(cfg, files::WAIT_DRAWS))?)?;
    let report: WaitFitReport = read_json(&require(artifact(cfg, files::WAIT_DIAGNOSTICS))?)?;
    let flow_rows = read_predictive_flows(&require(artifact(cfg, files::PREDICTIVE_FLOWS))?)?;

    // Sampled flow paths per date, in draw order.
    let mut by_date: BTreeMap<NaiveDate, Vec<(usize, f64)>> = BTreeMap::new();
    for row in &flow_rows {
        if row.draw >= 1 && row.model == ModelKind::Bhml.as_str() {
            by_date.entry(row.date).or_default().push((row.draw, row.flow));
        }
    }
    if by_date.is_empty() {
        return Err(PipelineError::NoSampledFlows);
    }

    let mut rng = substream_rng(cfg.seed, "predict-wait");
    let mut rows: Vec<PredictiveWaitRow> = Vec::new();
    for (&date, samples) in &mut by_date {
        samples.sort_by_key(|&(draw, _)| draw);
        let flows: Vec<f64> = samples.iter().map(|&(_, y)| y).collect();
        for &s in &report.identified {
            let waits = predict_wait_marginal(&wait_draws, report.nu, &flows, s, &mut rng)?;
            rows.extend(waits.iter().enumerate().map(|(j, &w)| PredictiveWaitRow {
                draw: j + 1,
                date,
                interval_index: s,
                wait_min: w,
            }));
        }
    }

    ensure_out_dir(cfg)?;
    write_predictive_waits(&artifact(cfg, files::PREDICTIVE_WAITS), &rows, &manifest_of(cfg))?;
    Ok(CmdReport::new(format!(
        "predicted waits for {} days x {} intervals ({} rows)",
        by_date.len(),
        report.identified.len(),
        rows.len(),
    )))
}

/// Predicted point flow per date for one model: the sample mean of its
/// draws (a point prediction is a single draw-0 row).
fn predicted_flow_means(rows: &[PredictiveFlowRow], model: ModelKind) -> Vec<(NaiveDate, f64)> {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for row in rows {
        if row.model == model.as_str() {
            let slot = acc.entry(row.date).or_insert((0.0, 0));
            slot.0 += row.flow;
            slot.1 += 1;
        }
    }
    acc.into_iter().map(|(date, (sum, n))| (date, sum / n as f64)).collect()
}

/// Scores predictions against the observed data and writes
/// `metrics.json`: weekly flow MSE per model, and the wait PE curve
/// when wait predictions are present.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let (cal, full) = load_series(cfg)?;
    let flow_rows = read_predictive_flows(&require(artifact(cfg, files::PREDICTIVE_FLOWS))?)?;

    let mut flow_metrics = Vec::new();
    for &model in &cfg.models {
        let means = predicted_flow_means(&flow_rows, model);
        if means.is_empty() {
            continue;
        }
        // Score the consecutive run of predicted dates the truth covers.
        let mut observed = Vec::new();
        let mut predicted = Vec::new();
        let mut first_idx = None;
        for (date, mean) in &means {
            match cal.index_of(*date) {
                Some(i) if i <= full.len() => {
                    if first_idx.is_none() {
                        first_idx = Some(i);
                    }
                    observed.push(full.flow(i)?);
                    predicted.push(*mean);
                }
                _ => break,
            }
        }
        let Some(first) = first_idx else {
            continue;
        };
        let sub = cal.slice(first, first + observed.len() - 1)?;
        let weeks = weekly_mse(&observed, &predicted, &sub)?;
        flow_metrics.push(FlowModelMetrics {
            model,
            mse_sum: mse_sum(&weeks, cfg.evaluate.burn_in_weeks),
            mse_sum_total: mse_sum(&weeks, 0),
            weeks,
        });
    }

    let wait = evaluate_waits(cfg)?;

    let report = MetricsReport {
        scenario: cfg.scenario.as_ref().map(|s| s.label.clone()),
        burn_in_weeks: cfg.evaluate.burn_in_weeks,
        flow: flow_metrics,
        wait,
    };
    ensure_out_dir(cfg)?;
    write_json(&artifact(cfg, files::METRICS), &report)?;

    let mut summary = format!("evaluated {} flow models", report.flow.len());
    for fm in &report.flow {
        summary.push_str(&format!(
            "; {} mse_sum {:.4} over {} weeks",
            fm.model,
            fm.mse_sum,
            fm.weeks.len()
        ));
    }
    if let Some(w) = &report.wait {
        summary.push_str(&format!("; wait PE over {} observations", w.observations));
    }
    Ok(CmdReport::new(summary))
}

/// PE of predicted mean waits against observed waits on the overlap of
/// predicted and observed dates. `None` when either side is absent.
fn evaluate_waits(cfg: &RunConfig) -> Result<Option<WaitMetrics>, PipelineError> {
    let pred_path = artifact(cfg, files::PREDICTIVE_WAITS);
    let truth_path = artifact(cfg, files::WAITS);
    if !pred_path.is_file() || !truth_path.is_file() {
        return Ok(None);
    }
    let pred_rows = crate::io::read_predictive_waits(&pred_path)?;
    let truth = read_waits(&truth_path)?;
    let grid = IntervalGrid::new(cfg.intervals)?;

    // Predicted mean per (date, interval).
    let mut acc: BTreeMap<(NaiveDate, usize), (f64, usize)> = BTreeMap::new();
    for row in &pred_rows {
        let slot = acc.entry((row.date, row.interval_index)).or_insert((0.0, 0));
        slot.0 += row.wait_min;
        slot.1 += 1;
    }
    let mut dates: Vec<NaiveDate> = acc.keys().map(|&(d, _)| d).collect();
    dates.dedup();
    dates.retain(|d| truth.days().iter().any(|day| day.date == *d));
    if dates.is_empty() {
        return Ok(None);
    }

    let mut cells = WaitCells::new(dates.len(), grid.count());
    let mut matrix = vec![vec![0.0; grid.count()]; dates.len()];
    for (di, date) in dates.iter().enumerate() {
        for s in 1..=grid.count() {
            if let Some(&(sum, n)) = acc.get(&(*date, s)) {
                matrix[di][s - 1] = sum / n as f64;
                // Only observations in predicted intervals are scored.
                let day = truth
                    .days()
                    .iter()
                    .find(|day| day.date == *date)
                    .expect("date retained above");
                for (&t, &w) in day.request_minutes.iter().zip(&day.pseudo_waits) {
                    if grid.interval_of(t)? == s {
                        cells.push(di + 1, s, w)?;
                    }
                }
            }
        }
    }
    if cells.total() == 0 {
        return Ok(None);
    }
    let curve = pe_curve(&cells, &matrix, &cfg.evaluate.pe_deltas)?;
    Ok(Some(WaitMetrics { pe_curve: curve, observations: cells.total() }))
}

/// Materializes the configured train/test split as separate artifacts
/// plus a `scenario.json` bookkeeping report.
pub fn cmd_scenario(cfg: &RunConfig) -> Result<CmdReport, PipelineError> {
    let spec = cfg.scenario.as_ref().ok_or(PipelineError::MissingSection("scenario"))?;
    let (_cal, full) = load_series(cfg)?;
    let split = scenario_split_flows(&full, spec)?;

    ensure_out_dir(cfg)?;
    let m = manifest_of(cfg);
    write_flows(&artifact(cfg, files::TRAIN_FLOWS), &split.train, &m)?;
    write_flows(&artifact(cfg, files::TEST_FLOWS), &split.test, &m)?;

    let waits_path = artifact(cfg, files::WAITS);
    let mut wait_counts = None;
    if waits_path.is_file() {
        let log = read_waits(&waits_path)?;
        let wsplit = scenario_split_waits(&log, spec)?;
        write_waits(&artifact(cfg, files::TRAIN_WAITS), &wsplit.train, &m)?;
        write_waits(&artifact(cfg, files::TEST_WAITS), &wsplit.test, &m)?;
        wait_counts = Some((wsplit.train_count(), wsplit.test_count()));
    }

    let report = ScenarioReport {
        label: spec.label.clone(),
        train_start: spec.train_start,
        train_end: spec.train_end,
        test_start: spec.test_start,
        test_end: spec.test_end,
        train_days: split.train_days(),
        test_days: split.test_days(),
        train_wait_observations: wait_counts.map(|(a, _)| a),
        test_wait_observations: wait_counts.map(|(_, b)| b),
    };
    write_json(&artifact(cfg, files::SCENARIO), &report)?;

    Ok(CmdReport::new(format!(
        "scenario {}: {} training days, {} test days",
        report.label, report.train_days, report.test_days,
    )))
}
