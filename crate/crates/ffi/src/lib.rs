//! C ABI for the flowcast forecasting library.
//!
//! Handles are opaque pointers owned by the library: every `*_read` or
//! `*_load` constructor has a matching `*_free`, and nothing else may
//! release them. Every fallible call returns an [`FcStatus`]; on any
//! non-OK status the thread-local message from
//! [`fc_last_error_message`] describes the failure. Panics never cross
//! the boundary: they are caught and reported as `FC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use flowcast::config::RunConfig;
use flowcast::flow::FlowSeries;
use flowcast::io::{read_calendar, read_draws, read_flow_series};
use flowcast::mcmc::PosteriorDraws;
use flowcast::pipeline::{self, PipelineError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of range for the handle.
    InvalidArgument = 3,
    /// File could not be read, written, or parsed.
    Io = 4,
    /// Configuration failed to load or validate.
    Config = 5,
    /// Calendar construction or lookup failed.
    Calendar = 6,
    /// Flow model failure.
    Flow = 7,
    /// Waiting model failure.
    Wait = 8,
    /// Sampler failure.
    Mcmc = 9,
    /// Evaluation failure.
    Eval = 10,
    /// Baseline model failure.
    Baseline = 11,
    /// The run needs a config section or input artifact that is absent.
    MissingInput = 12,
    /// A library panic was caught at the boundary.
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NUL bytes removed");
    });
}

fn fail(status: FcStatus, message: &str) -> FcStatus {
    set_error(message);
    status
}

fn status_of(err: &PipelineError) -> FcStatus {
    match err.kind() {
        "config" => FcStatus::Config,
        "io" => FcStatus::Io,
        "calendar" => FcStatus::Calendar,
        "flow" => FcStatus::Flow,
        "wait" => FcStatus::Wait,
        "baseline" => FcStatus::Baseline,
        "eval" => FcStatus::Eval,
        "mcmc" => FcStatus::Mcmc,
        "missing_section" | "missing_artifact" => FcStatus::MissingInput,
        "too_few_days" | "no_wait_data" | "calendar_too_short" | "no_sampled_flows" => {
            FcStatus::InvalidArgument
        }
        _ => FcStatus::Io,
    }
}

fn report(err: PipelineError) -> FcStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Runs `body` with panics converted to `FC_STATUS_PANIC`.
fn guarded(body: impl FnOnce() -> FcStatus) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            fail(FcStatus::Panic, &format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for reads.
unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, FcStatus> {
    if ptr.is_null() {
        return Err(fail(FcStatus::NullArgument, "path argument is null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(FcStatus::InvalidUtf8, "path argument is not valid UTF-8")),
    }
}

/// # Safety
/// `ptr` must be null or valid for reads as a reference to `T`.
unsafe fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, FcStatus> {
    ptr.as_ref().ok_or_else(|| fail(FcStatus::NullArgument, &format!("{name} handle is null")))
}

fn write_out<T>(out: *mut T, value: T, name: &str) -> FcStatus {
    if out.is_null() {
        return fail(FcStatus::NullArgument, &format!("{name} output pointer is null"));
    }
    unsafe { out.write(value) };
    FcStatus::Ok
}

/// A loaded, validated run configuration.
pub struct FcRunConfig {
    inner: RunConfig,
}

/// A contiguous service calendar loaded from `calendar.csv`.
pub struct FcCalendar {
    inner: flowcast::calendar::ServiceCalendar,
}

/// A daily flow series aligned to a calendar.
pub struct FcFlowSeries {
    inner: FlowSeries,
}

/// Posterior draws loaded from a draws CSV.
pub struct FcDraws {
    inner: PosteriorDraws,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads and validates a JSON run configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a
/// single pointer write. On `FC_STATUS_OK` the caller owns the handle
/// and must release it with [`fc_run_config_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_run_config_load(
    path: *const c_char,
    out: *mut *mut FcRunConfig,
) -> FcStatus {
    guarded(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_validated(&path) {
            Ok(cfg) => {
                let handle = Box::into_raw(Box::new(FcRunConfig { inner: cfg }));
                write_out(out, handle, "config")
            }
            Err(e) => report(e),
        }
    })
}

fn load_validated(path: &Path) -> Result<RunConfig, PipelineError> {
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Overrides the run seed.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_run_config_set_seed(cfg: *mut FcRunConfig, seed: u64) -> FcStatus {
    guarded(|| match cfg.as_mut() {
        Some(handle) => {
            handle.inner.seed = seed;
            FcStatus::Ok
        }
        None => fail(FcStatus::NullArgument, "config handle is null"),
    })
}

/// Overrides the output directory.
///
/// # Safety
/// `cfg` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fc_run_config_set_out_dir(
    cfg: *mut FcRunConfig,
    path: *const c_char,
) -> FcStatus {
    guarded(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match cfg.as_mut() {
            Some(handle) => {
                handle.inner.out_dir = path;
                FcStatus::Ok
            }
            None => fail(FcStatus::NullArgument, "config handle is null"),
        }
    })
}

/// Reads the run seed.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fc_run_config_seed(cfg: *const FcRunConfig, out: *mut u64) -> FcStatus {
    guarded(|| match ref_arg(cfg, "config") {
        Ok(handle) => write_out(out, handle.inner.seed, "seed"),
        Err(s) => s,
    })
}

/// Writes the 16-character configuration hash plus a trailing NUL into
/// `buf`, which must hold at least 17 bytes.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must be valid for `buf_len`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fc_run_config_hash(
    cfg: *const FcRunConfig,
    buf: *mut c_char,
    buf_len: usize,
) -> FcStatus {
    guarded(|| {
        let handle = match ref_arg(cfg, "config") {
            Ok(h) => h,
            Err(s) => return s,
        };
        if buf.is_null() {
            return fail(FcStatus::NullArgument, "hash buffer is null");
        }
        let hash = handle.inner.config_hash();
        if buf_len < hash.len() + 1 {
            return fail(
                FcStatus::InvalidArgument,
                &format!("hash buffer holds {buf_len} bytes, need {}", hash.len() + 1),
            );
        }
        std::ptr::copy_nonoverlapping(hash.as_ptr() as *const c_char, buf, hash.len());
        buf.add(hash.len()).write(0);
        FcStatus::Ok
    })
}

/// Releases a config handle; a null pointer is a no-op.
///
/// # Safety
/// `cfg` must be null or a live handle, and must not be used afterward.
#[no_mangle]
pub unsafe extern "C" fn fc_run_config_free(cfg: *mut FcRunConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn run_command(
    cfg: *const FcRunConfig,
    cmd: fn(&RunConfig) -> Result<pipeline::CmdReport, PipelineError>,
) -> FcStatus {
    guarded(|| match ref_arg(cfg, "config") {
        Ok(handle) => match cmd(&handle.inner) {
            Ok(_) => FcStatus::Ok,
            Err(e) => report(e),
        },
        Err(s) => s,
    })
}

/// Generates the synthetic dataset configured in the simulate section.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_simulate(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_simulate)
}

/// Fits the daily-flow model on the training window.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_fit_flow(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_fit_flow)
}

/// Fits the sub-daily wait regression on the training window.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_fit_wait(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_fit_wait)
}

/// Predicts daily flows over the forecast window.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_predict_flow(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_predict_flow)
}

/// Predicts sub-daily waits over the forecast window.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_predict_wait(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_predict_wait)
}

/// Scores predictions against observed data.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_evaluate(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_evaluate)
}

/// Materializes the configured train/test split.
///
/// # Safety
/// `cfg` must be a live handle from [`fc_run_config_load`].
#[no_mangle]
pub unsafe extern "C" fn fc_cmd_scenario(cfg: *const FcRunConfig) -> FcStatus {
    run_command(cfg, pipeline::cmd_scenario)
}

/// Reads a `calendar.csv` artifact.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid for one pointer
/// write. On `FC_STATUS_OK` the caller owns the handle and must release
/// it with [`fc_calendar_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_calendar_read(
    path: *const c_char,
    out: *mut *mut FcCalendar,
) -> FcStatus {
    guarded(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_calendar(&path) {
            Ok(cal) => {
                write_out(out, Box::into_raw(Box::new(FcCalendar { inner: cal })), "calendar")
            }
            Err(e) => report(e.into()),
        }
    })
}

/// Number of days in the calendar.
///
/// # Safety
/// `cal` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fc_calendar_len(cal: *const FcCalendar, out: *mut usize) -> FcStatus {
    guarded(|| match ref_arg(cal, "calendar") {
        Ok(handle) => write_out(out, handle.inner.len(), "length"),
        Err(s) => s,
    })
}

/// Releases a calendar handle; a null pointer is a no-op.
///
/// # Safety
/// `cal` must be null or a live handle, and must not be used afterward.
#[no_mangle]
pub unsafe extern "C" fn fc_calendar_free(cal: *mut FcCalendar) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

/// Reads a `flows.csv` artifact aligned against a calendar.
///
/// # Safety
/// `path` must be NUL-terminated; `cal` must be a live handle; `out`
/// must be valid for one pointer write. On `FC_STATUS_OK` the caller
/// owns the handle and must release it with [`fc_flow_series_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_flow_series_read(
    path: *const c_char,
    cal: *const FcCalendar,
    out: *mut *mut FcFlowSeries,
) -> FcStatus {
    guarded(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let cal = match ref_arg(cal, "calendar") {
            Ok(c) => c,
            Err(s) => return s,
        };
        match read_flow_series(&path, &cal.inner) {
            Ok(series) => write_out(
                out,
                Box::into_raw(Box::new(FcFlowSeries { inner: series })),
                "flow series",
            ),
            Err(e) => report(e.into()),
        }
    })
}

/// Number of days in the series.
///
/// # Safety
/// `series` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fc_flow_series_len(
    series: *const FcFlowSeries,
    out: *mut usize,
) -> FcStatus {
    guarded(|| match ref_arg(series, "flow series") {
        Ok(handle) => write_out(out, handle.inner.len(), "length"),
        Err(s) => s,
    })
}

/// Flow of day `i` (1-based).
///
/// # Safety
/// `series` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fc_flow_series_flow(
    series: *const FcFlowSeries,
    i: usize,
    out: *mut f64,
) -> FcStatus {
    guarded(|| {
        let handle = match ref_arg(series, "flow series") {
            Ok(h) => h,
            Err(s) => return s,
        };
        match handle.inner.flow(i) {
            Ok(y) => write_out(out, y, "flow"),
            Err(e) => fail(FcStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Releases a flow series handle; a null pointer is a no-op.
///
/// # Safety
/// `series` must be null or a live handle, and must not be used
/// afterward.
#[no_mangle]
pub unsafe extern "C" fn fc_flow_series_free(series: *mut FcFlowSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Reads a posterior draws CSV.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid for one pointer
/// write. On `FC_STATUS_OK` the caller owns the handle and must release
/// it with [`fc_draws_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_draws_read(path: *const c_char, out: *mut *mut FcDraws) -> FcStatus {
    guarded(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_draws(&path) {
            Ok(draws) => {
                write_out(out, Box::into_raw(Box::new(FcDraws { inner: draws })), "draws")
            }
            Err(e) => report(e.into()),
        }
    })
}

/// Total number of retained draws across all chains.
///
/// # Safety
/// `draws` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fc_draws_total(draws: *const FcDraws, out: *mut usize) -> FcStatus {
    guarded(|| match ref_arg(draws, "draws") {
        Ok(handle) => write_out(out, handle.inner.total_draws(), "total"),
        Err(s) => s,
    })
}

/// Posterior mean of the named parameter.
///
/// # Safety
/// `draws` must be a live handle; `name` must be NUL-terminated; `out`
/// must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fc_draws_mean(
    draws: *const FcDraws,
    name: *const c_char,
    out: *mut f64,
) -> FcStatus {
    guarded(|| {
        let handle = match ref_arg(draws, "draws") {
            Ok(h) => h,
            Err(s) => return s,
        };
        if name.is_null() {
            return fail(FcStatus::NullArgument, "parameter name is null");
        }
        let name = match CStr::from_ptr(name).to_str() {
            Ok(s) => s,
            Err(_) => return fail(FcStatus::InvalidUtf8, "parameter name is not valid UTF-8"),
        };
        match handle.inner.mean_of(name) {
            Ok(mean) => write_out(out, mean, "mean"),
            Err(e) => fail(FcStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Releases a draws handle; a null pointer is a no-op.
///
/// # Safety
/// `draws` must be null or a live handle, and must not be used
/// afterward.
#[no_mangle]
pub unsafe extern "C" fn fc_draws_free(draws: *mut FcDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}
