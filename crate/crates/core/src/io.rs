//! File formats: CSV artifacts and JSON reports.
//!
//! Every CSV artifact is UTF-8 and comma-delimited with a mandatory
//! header row, preceded by one comment line
//! `# flowcast config=<hash> seed=<seed>` that ties the file to the
//! configuration that produced it. Readers skip `#` comment lines, so
//! the files also load cleanly in standard tools.
//!
//! Formats:
//! * `calendar.csv`: `date,day_type`
//! * `flows.csv`: `date,flow`
//! * `waits.csv`: `date,request_time,pseudo_wait_min,arrival_time`
//!   (the arrival column may be empty or absent)
//! * `*_draws.csv`: `chain,iter,param,value` in long form
//! * `predictive_flows.csv`: `draw,date,flow,model`
//! * `predictive_waits.csv`: `draw,date,interval_index,wait_min`
//! * `*.json`: manifest, diagnostics, and metrics reports

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{DayType, ServiceCalendar};
use crate::flow::FlowSeries;
use crate::mcmc::diagnostics::Diagnostics;
use crate::mcmc::PosteriorDraws;
use crate::waiting::{DayWaits, RequestLog};

/// File I/O errors; row numbers count physical lines in the file.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot create {path}: {source}")]
    Create {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    fn from_csv(path: &Path, err: csv::Error) -> IoError {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        IoError::Row { path: path.to_path_buf(), line, message: err.to_string() }
    }

    fn row(path: &Path, line: u64, message: impl Into<String>) -> IoError {
        IoError::Row { path: path.to_path_buf(), line, message: message.into() }
    }

    fn format(path: &Path, message: impl Into<String>) -> IoError {
        IoError::Format { path: path.to_path_buf(), message: message.into() }
    }
}

/// Provenance stamp written as the first line of every CSV artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
}

impl Manifest {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Manifest { config_hash: config_hash.into(), seed }
    }

    fn line(&self) -> String {
        format!("# flowcast config={} seed={}", self.config_hash, self.seed)
    }
}

/// Reads the manifest comment from the first line of a CSV artifact.
pub fn read_manifest_line(path: &Path) -> Result<Option<Manifest>, IoError> {
    let file =
        File::open(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    let rest = match first.trim_end().strip_prefix("# flowcast ") {
        Some(rest) => rest,
        None => return Ok(None),
    };
    let mut hash = None;
    let mut seed = None;
    for token in rest.split_whitespace() {
        if let Some(h) = token.strip_prefix("config=") {
            hash = Some(h.to_string());
        } else if let Some(s) = token.strip_prefix("seed=") {
            seed = s.parse::<u64>().ok();
        }
    }
    match (hash, seed) {
        (Some(config_hash), Some(seed)) => Ok(Some(Manifest { config_hash, seed })),
        _ => Err(IoError::row(path, 1, "malformed manifest comment line")),
    }
}

fn open_csv_writer(
    path: &Path,
    manifest: &Manifest,
) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let file =
        File::create(path).map_err(|source| IoError::Create { path: path.to_path_buf(), source })?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "{}", manifest.line())
        .map_err(|source| IoError::Write { path: path.to_path_buf(), source })?;
    Ok(csv::WriterBuilder::new().has_headers(true).from_writer(buf))
}

fn open_csv_reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let file =
        File::open(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(file))
}

fn write_rows<T: Serialize>(
    path: &Path,
    manifest: &Manifest,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    let mut w = open_csv_writer(path, manifest)?;
    for row in rows {
        w.serialize(row).map_err(|e| IoError::from_csv(path, e))?;
    }
    w.flush().map_err(|source| IoError::Write { path: path.to_path_buf(), source })?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, IoError> {
    let mut rdr = open_csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::from_csv(path, e))?.clone();
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IoError::from_csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| IoError::row(path, line, e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CalendarRow {
    date: NaiveDate,
    day_type: DayType,
}

/// Writes `calendar.csv`.
pub fn write_calendar(
    path: &Path,
    cal: &ServiceCalendar,
    manifest: &Manifest,
) -> Result<(), IoError> {
    write_rows(path, manifest, cal.entries().map(|(date, day_type)| CalendarRow { date, day_type }))
}

/// Reads `calendar.csv` into a validated contiguous calendar.
pub fn read_calendar(path: &Path) -> Result<ServiceCalendar, IoError> {
    let rows = read_rows::<CalendarRow>(path)?;
    if rows.is_empty() {
        return Err(IoError::format(path, "calendar file holds no rows"));
    }
    let entries: Vec<(NaiveDate, DayType)> =
        rows.iter().map(|(_, r)| (r.date, r.day_type)).collect();
    ServiceCalendar::from_entries(&entries).map_err(|e| {
        // Pinpoint the first non-contiguous row for the error message.
        for (j, pair) in entries.windows(2).enumerate() {
            if pair[1].0 != pair[0].0.succ_opt().unwrap_or(pair[0].0) {
                return IoError::row(path, rows[j + 1].0, e.to_string());
            }
        }
        IoError::format(path, e.to_string())
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRow {
    date: NaiveDate,
    flow: f64,
}

/// Writes `flows.csv` for a series.
pub fn write_flows(path: &Path, series: &FlowSeries, manifest: &Manifest) -> Result<(), IoError> {
    let cal = series.calendar();
    write_rows(
        path,
        manifest,
        series.flows().iter().enumerate().map(|(j, &flow)| FlowRow {
            date: cal.date(j + 1).expect("series dates within calendar"),
            flow,
        }),
    )
}

/// Reads `flows.csv` and aligns it against `cal`, producing a series
/// over the sub-calendar its dates cover. Dates must be consecutive and
/// lie within `cal`.
pub fn read_flow_series(path: &Path, cal: &ServiceCalendar) -> Result<FlowSeries, IoError> {
    let rows = read_rows::<FlowRow>(path)?;
    if rows.is_empty() {
        return Err(IoError::format(path, "flow file holds no rows"));
    }
    for (pair, (line, row)) in rows.windows(2).map(|w| (&w[0], &w[1])).zip(rows.iter().skip(1)) {
        let expected = pair.0 .1.date.succ_opt();
        if expected != Some(row.date) {
            return Err(IoError::row(
                path,
                *line,
                format!("dates must be consecutive: {} after {}", row.date, pair.0 .1.date),
            ));
        }
    }
    let first = cal
        .index_of(rows[0].1.date)
        .ok_or_else(|| IoError::row(path, rows[0].0, format!("date {} outside the calendar", rows[0].1.date)))?;
    let last_row = rows.last().expect("nonempty");
    let last = cal.index_of(last_row.1.date).ok_or_else(|| {
        IoError::row(path, last_row.0, format!("date {} outside the calendar", last_row.1.date))
    })?;
    let sub = cal.slice(first, last).map_err(|e| IoError::format(path, e.to_string()))?;
    let flows: Vec<f64> = rows.iter().map(|(_, r)| r.flow).collect();
    for ((line, _), &y) in rows.iter().zip(&flows) {
        if !y.is_finite() {
            return Err(IoError::row(path, *line, "flow must be finite"));
        }
    }
    FlowSeries::new(sub, flows).map_err(|e| IoError::format(path, e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct WaitRow {
    date: NaiveDate,
    request_time: f64,
    pseudo_wait_min: f64,
    #[serde(default)]
    arrival_time: Option<f64>,
}

/// Writes `waits.csv`; the arrival column is left empty for days
/// without recorded arrivals.
pub fn write_waits(path: &Path, log: &RequestLog, manifest: &Manifest) -> Result<(), IoError> {
    let mut w = open_csv_writer(path, manifest)?;
    for day in log.days() {
        for (j, (&t, &wait)) in day.request_minutes.iter().zip(&day.pseudo_waits).enumerate() {
            let arrival = day.arrivals.as_ref().map(|a| a[j]);
            w.serialize(WaitRow {
                date: day.date,
                request_time: t,
                pseudo_wait_min: wait,
                arrival_time: arrival,
            })
            .map_err(|e| IoError::from_csv(path, e))?;
        }
    }
    w.flush().map_err(|source| IoError::Write { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Reads `waits.csv`, grouping consecutive rows of one date into a day.
/// Derives perceived waits where arrivals are present.
pub fn read_waits(path: &Path) -> Result<RequestLog, IoError> {
    let rows = read_rows::<WaitRow>(path)?;
    let mut days: Vec<DayWaits> = Vec::new();
    for (line, row) in &rows {
        let matches_last = days.last().is_some_and(|d| d.date == row.date);
        if !matches_last {
            if days.iter().any(|d| d.date == row.date) {
                return Err(IoError::row(
                    path,
                    *line,
                    format!("rows of {} are not grouped together", row.date),
                ));
            }
            days.push(DayWaits {
                date: row.date,
                request_minutes: Vec::new(),
                pseudo_waits: Vec::new(),
                arrivals: Some(Vec::new()),
                perceived: None,
            });
        }
        let day = days.last_mut().expect("pushed above");
        day.request_minutes.push(row.request_time);
        day.pseudo_waits.push(row.pseudo_wait_min);
        match (&mut day.arrivals, row.arrival_time) {
            (Some(list), Some(a)) => list.push(a),
            (arr, _) => *arr = None,
        }
    }
    for day in &mut days {
        if let Some(arrivals) = &day.arrivals {
            day.perceived = Some(
                day.request_minutes.iter().zip(arrivals).map(|(&t, &a)| a - t).collect(),
            );
        }
    }
    days.sort_by_key(|d| d.date);
    RequestLog::new(days).map_err(|e| IoError::format(path, e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct DrawRow {
    chain: usize,
    iter: usize,
    param: String,
    value: f64,
}

/// Writes posterior draws in long form: one row per
/// `(chain, iter, param)`.
pub fn write_draws(path: &Path, draws: &PosteriorDraws, manifest: &Manifest) -> Result<(), IoError> {
    let mut w = open_csv_writer(path, manifest)?;
    for chain in 0..draws.chains() {
        for iter in 0..draws.iters_per_chain() {
            let row = draws.row(chain, iter);
            for (p, name) in draws.names().iter().enumerate() {
                w.serialize(DrawRow { chain, iter, param: name.clone(), value: row[p] })
                    .map_err(|e| IoError::from_csv(path, e))?;
            }
        }
    }
    w.flush().map_err(|source| IoError::Write { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Reads long-form draws back into a draw matrix. The file must hold a
/// complete `chains x iters x params` grid.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws, IoError> {
    let rows = read_rows::<DrawRow>(path)?;
    if rows.is_empty() {
        return Err(IoError::format(path, "draw file holds no rows"));
    }
    let mut names: Vec<String> = Vec::new();
    for (_, row) in &rows {
        if !names.iter().any(|n| n == &row.param) {
            names.push(row.param.clone());
        }
    }
    let chains = rows.iter().map(|(_, r)| r.chain).max().expect("nonempty") + 1;
    let iters = rows.iter().map(|(_, r)| r.iter).max().expect("nonempty") + 1;
    let expect = chains * iters * names.len();
    if rows.len() != expect {
        return Err(IoError::format(
            path,
            format!(
                "incomplete draw grid: {} rows for {chains} chains x {iters} draws x {} params",
                rows.len(),
                names.len()
            ),
        ));
    }
    let mut values = vec![f64::NAN; expect];
    let mut seen = vec![false; expect];
    for (line, row) in &rows {
        let p = names.iter().position(|n| n == &row.param).expect("collected above");
        let at = (row.chain * iters + row.iter) * names.len() + p;
        if seen[at] {
            return Err(IoError::row(
                path,
                *line,
                format!("duplicate draw for chain {} iter {} param {}", row.chain, row.iter, row.param),
            ));
        }
        seen[at] = true;
        values[at] = row.value;
    }
    PosteriorDraws::new(names, chains, iters, values)
        .map_err(|e| IoError::format(path, e.to_string()))
}

/// One predictive flow sample (or point prediction at `draw` 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveFlowRow {
    pub draw: usize,
    pub date: NaiveDate,
    pub flow: f64,
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_model() -> String {
    "BHML".to_string()
}

/// Writes `predictive_flows.csv`.
pub fn write_predictive_flows(
    path: &Path,
    rows: &[PredictiveFlowRow],
    manifest: &Manifest,
) -> Result<(), IoError> {
    write_rows(path, manifest, rows.iter().cloned())
}

/// Reads `predictive_flows.csv`; a missing `model` column defaults to
/// `BHML`.
pub fn read_predictive_flows(path: &Path) -> Result<Vec<PredictiveFlowRow>, IoError> {
    Ok(read_rows::<PredictiveFlowRow>(path)?.into_iter().map(|(_, r)| r).collect())
}

/// One predictive wait sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveWaitRow {
    pub draw: usize,
    pub date: NaiveDate,
    pub interval_index: usize,
    pub wait_min: f64,
}

/// Writes `predictive_waits.csv`.
pub fn write_predictive_waits(
    path: &Path,
    rows: &[PredictiveWaitRow],
    manifest: &Manifest,
) -> Result<(), IoError> {
    write_rows(path, manifest, rows.iter().cloned())
}

/// Reads `predictive_waits.csv`.
pub fn read_predictive_waits(path: &Path) -> Result<Vec<PredictiveWaitRow>, IoError> {
    Ok(read_rows::<PredictiveWaitRow>(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Serializable convergence report mirroring
/// [`crate::mcmc::diagnostics::Diagnostics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: BTreeMap<String, ParamReport>,
    pub warnings: Vec<String>,
}

/// Per-parameter convergence summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub rhat: f64,
    pub ess: f64,
    pub accept_rate: f64,
}

impl DiagnosticsReport {
    pub fn from_diagnostics(d: &Diagnostics) -> Self {
        DiagnosticsReport {
            params: d
                .params
                .iter()
                .map(|(name, p)| {
                    (
                        name.clone(),
                        ParamReport { rhat: p.rhat, ess: p.ess, accept_rate: p.accept_rate },
                    )
                })
                .collect(),
            warnings: d.warnings.clone(),
        }
    }
}

/// Writes a pretty-printed JSON document ending in a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::format(path, format!("cannot serialize: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| IoError::Write { path: path.to_path_buf(), source })
}

/// Reads a JSON document.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| IoError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::DayType;
    use tempfile::TempDir;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn manifest() -> Manifest {
        Manifest::new("abcdef0123456789", 42)
    }

    #[test]
    fn calendar_round_trips_with_manifest() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("calendar.csv");
        let mut types = vec![DayType::Ord; 10];
        types[5] = DayType::Pwe;
        types[6] = DayType::Pwe;
        types[2] = DayType::Sch;
        let cal = ServiceCalendar::new(d("2018-05-15"), types).unwrap();
        write_calendar(&path, &cal, &manifest()).unwrap();

        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with("# flowcast config=abcdef0123456789 seed=42\n"));
        assert!(first.lines().nth(1).unwrap().starts_with("date,day_type"));

        let back = read_calendar(&path).unwrap();
        assert_eq!(back, cal);
        let m = read_manifest_line(&path).unwrap().unwrap();
        assert_eq!(m, manifest());
    }

    #[test]
    fn calendar_gap_reports_row_number() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("calendar.csv");
        std::fs::write(
            &path,
            "# flowcast config=x seed=1\ndate,day_type\n2018-05-15,ORD\n2018-05-17,ORD\n",
        )
        .unwrap();
        let err = read_calendar(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn flows_round_trip_and_align() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("flows.csv");
        let cal = ServiceCalendar::new(d("2018-05-15"), vec![DayType::Ord; 20]).unwrap();
        let series =
            FlowSeries::new(cal.slice(3, 12).unwrap(), (3..=12).map(|i| i as f64).collect())
                .unwrap();
        write_flows(&path, &series, &manifest()).unwrap();
        let back = read_flow_series(&path, &cal).unwrap();
        assert_eq!(back.flows(), series.flows());
        assert_eq!(back.calendar().start_date(), d("2018-05-17"));
    }

    #[test]
    fn flows_reject_gaps_and_bad_values() {
        let dir = TempDir::new().unwrap();
        let cal = ServiceCalendar::new(d("2018-05-15"), vec![DayType::Ord; 20]).unwrap();

        let path = dir.path().join("gap.csv");
        std::fs::write(&path, "date,flow\n2018-05-15,10\n2018-05-18,11\n").unwrap();
        let err = read_flow_series(&path, &cal).unwrap_err();
        assert!(err.to_string().contains("consecutive"), "{err}");

        let path = dir.path().join("naan.csv");
        std::fs::write(&path, "date,flow\n2018-05-15,10\n2018-05-16,NaN\n").unwrap();
        let err = read_flow_series(&path, &cal).unwrap_err();
        assert!(err.to_string().contains("finite"), "{err}");

        let path = dir.path().join("outside.csv");
        std::fs::write(&path, "date,flow\n2018-05-10,10\n").unwrap();
        let err = read_flow_series(&path, &cal).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");

        let path = dir.path().join("text.csv");
        std::fs::write(&path, "date,flow\n2018-05-15,10\n2018-05-16,many\n").unwrap();
        let err = read_flow_series(&path, &cal).unwrap_err();
        assert!(matches!(err, IoError::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn waits_round_trip_with_and_without_arrivals() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("waits.csv");
        let log = RequestLog::new(vec![
            DayWaits {
                date: d("2018-05-15"),
                request_minutes: vec![10.0, 20.0],
                pseudo_waits: vec![3.0, 2.0],
                arrivals: Some(vec![13.0, 22.0]),
                perceived: Some(vec![3.0, 2.0]),
            },
            DayWaits {
                date: d("2018-05-16"),
                request_minutes: vec![30.0],
                pseudo_waits: vec![4.0],
                arrivals: Some(vec![34.0]),
                perceived: Some(vec![4.0]),
            },
        ])
        .unwrap();
        write_waits(&path, &log, &manifest()).unwrap();
        let back = read_waits(&path).unwrap();
        assert_eq!(back, log);

        // A file without the arrival column parses with arrivals absent.
        let bare = dir.path().join("bare.csv");
        std::fs::write(
            &bare,
            "date,request_time,pseudo_wait_min\n2018-05-15,10,3\n2018-05-15,20,2\n",
        )
        .unwrap();
        let log = read_waits(&bare).unwrap();
        assert_eq!(log.days().len(), 1);
        assert_eq!(log.days()[0].arrivals, None);
        assert_eq!(log.days()[0].perceived, None);
        assert_eq!(log.days()[0].pseudo_waits, vec![3.0, 2.0]);
    }

    #[test]
    fn waits_reject_scattered_days_with_row_numbers() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("waits.csv");
        std::fs::write(
            &path,
            "date,request_time,pseudo_wait_min\n2018-05-15,10,3\n2018-05-16,20,2\n2018-05-15,30,1\n",
        )
        .unwrap();
        let err = read_waits(&path).unwrap_err();
        assert!(matches!(err, IoError::Row { line: 4, .. }), "{err}");
    }

    #[test]
    fn draws_round_trip_exactly() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("draws.csv");
        let names = vec!["alpha_ord".to_string(), "sigma2_eps".to_string()];
        let values: Vec<f64> =
            (0..2 * 3 * 2).map(|j| 0.1 + j as f64 * 0.017 + 1.0 / 3.0).collect();
        let draws = PosteriorDraws::new(names, 2, 3, values).unwrap();
        write_draws(&path, &draws, &manifest()).unwrap();
        let back = read_draws(&path).unwrap();
        assert_eq!(back.names(), draws.names());
        assert_eq!(back.chains(), 2);
        assert_eq!(back.iters_per_chain(), 3);
        for c in 0..2 {
            for t in 0..3 {
                assert_eq!(back.row(c, t), draws.row(c, t), "exact float round trip");
            }
        }
    }

    #[test]
    fn draws_reject_incomplete_grids() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("draws.csv");
        std::fs::write(
            &path,
            "chain,iter,param,value\n0,0,a,1.0\n0,1,a,2.0\n1,0,a,3.0\n",
        )
        .unwrap();
        let err = read_draws(&path).unwrap_err();
        assert!(err.to_string().contains("incomplete"), "{err}");

        std::fs::write(
            &path,
            "chain,iter,param,value\n0,0,a,1.0\n0,0,a,2.0\n0,1,a,3.0\n1,0,a,4.0\n",
        )
        .unwrap();
        let err = read_draws(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn predictive_rows_round_trip() {
        let dir = TempDir::new().unwrap();
        let fpath = dir.path().join("predictive_flows.csv");
        let flows = vec![
            PredictiveFlowRow { draw: 0, date: d("2019-01-14"), flow: 55.5, model: "BASE".into() },
            PredictiveFlowRow { draw: 1, date: d("2019-01-14"), flow: 57.25, model: "BHML".into() },
        ];
        write_predictive_flows(&fpath, &flows, &manifest()).unwrap();
        assert_eq!(read_predictive_flows(&fpath).unwrap(), flows);

        // Missing model column defaults to BHML.
        let bare = dir.path().join("bare.csv");
        std::fs::write(&bare, "draw,date,flow\n0,2019-01-14,55.5\n").unwrap();
        let rows = read_predictive_flows(&bare).unwrap();
        assert_eq!(rows[0].model, "BHML");

        let wpath = dir.path().join("predictive_waits.csv");
        let waits = vec![PredictiveWaitRow {
            draw: 3,
            date: d("2019-01-14"),
            interval_index: 5,
            wait_min: 12.75,
        }];
        write_predictive_waits(&wpath, &waits, &manifest()).unwrap();
        assert_eq!(read_predictive_waits(&wpath).unwrap(), waits);
    }

    #[test]
    fn json_round_trips() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("report.json");
        let mut params = BTreeMap::new();
        params.insert(
            "beta_1".to_string(),
            ParamReport { rhat: 1.001, ess: 9000.0, accept_rate: 0.43 },
        );
        let report = DiagnosticsReport { params, warnings: vec!["example".into()] };
        write_json(&path, &report).unwrap();
        let back: DiagnosticsReport = read_json(&path).unwrap();
        assert_eq!(back, report);
        assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));
    }

    #[test]
    fn missing_manifest_reads_as_none() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("plain.csv");
        std::fs::write(&path, "date,flow\n2018-05-15,10\n").unwrap();
        assert_eq!(read_manifest_line(&path).unwrap(), None);
    }
}
