//! C ABI over the simulator. Every object crosses the boundary as an opaque
//! handle that the caller releases with the matching `*_free` function.
//! Fallible functions return a [`PcaStatus`]; on failure the message is
//! available from [`pca_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pca_phasefield::analysis::{self, RunData, RunReport};
use pca_phasefield::config::{self, Config};
use pca_phasefield::stepper::{self, Trajectory, SERIES_HEADER};
use pca_phasefield::{steady, Error, Grid};

/// Number of values in one time-series sample.
pub const PCA_SAMPLE_LEN: usize = 13;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    Io = 5,
    Unavailable = 6,
    Panic = 7,
}

/// Parsed configuration plus the source text it came from.
pub struct PcaConfig {
    text: String,
    overrides: Vec<(String, String)>,
    config: Config,
}

/// A completed integration.
pub struct PcaRun {
    config: Config,
    grid: Grid,
    trajectory: Trajectory,
}

/// Analysis verdicts of a run.
pub struct PcaReport {
    report: RunReport,
    names: Vec<CString>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PcaCheck {
    pub asserted: bool,
    pub passed: bool,
    pub margin: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PcaStatus {
    match e {
        Error::Io(_) => PcaStatus::Io,
        e if e.is_config_error() => PcaStatus::Config,
        _ => PcaStatus::Solver,
    }
}

fn fail(status: PcaStatus, msg: impl Into<String>) -> PcaStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), PcaStatus>) -> PcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PcaStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(PcaStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: pca_phasefield::Result<T>) -> Result<T, PcaStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PcaStatus> {
    if p.is_null() {
        return Err(fail(PcaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PcaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, PcaStatus> {
    p.as_ref().ok_or_else(|| fail(PcaStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), PcaStatus> {
    if p.is_null() {
        Err(fail(PcaStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Comma-separated column names of a sample. Static storage.
#[no_mangle]
pub extern "C" fn pca_series_header() -> *const c_char {
    static HEADER: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    HEADER.get_or_init(|| CString::new(SERIES_HEADER).unwrap()).as_ptr()
}

/// Parse a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pca_config_from_toml(text: *const c_char, out: *mut *mut PcaConfig) -> PcaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = text_arg(text, "text")?.to_string();
        let config = lift(config::load_config(&text))?;
        *out = Box::into_raw(Box::new(PcaConfig { text, overrides: Vec::new(), config }));
        Ok(())
    })
}

/// Override one entry (`key` as accepted by `--set`, `value` in TOML
/// syntax). On failure the configuration is left unchanged.
///
/// # Safety
/// `cfg` must come from [`pca_config_from_toml`]; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pca_config_set(cfg: *mut PcaConfig, key: *const c_char, value: *const c_char) -> PcaStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| fail(PcaStatus::NullPointer, "cfg is null"))?;
        let key = text_arg(key, "key")?;
        let value = text_arg(value, "value")?;
        let mut overrides = cfg.overrides.clone();
        overrides.push((key.to_string(), value.to_string()));
        cfg.config = lift(config::load_config_with_overrides(&cfg.text, &overrides))?;
        cfg.overrides = overrides;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from [`pca_config_from_toml`], freed once.
#[no_mangle]
pub unsafe extern "C" fn pca_config_free(cfg: *mut PcaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Integrate the configured run. No files are written.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pca_run_new(cfg: *const PcaConfig, out: *mut *mut PcaRun) -> PcaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let config = handle(cfg, "cfg")?.config.clone();
        let grid = lift(config.run.grid())?;
        let initial = stepper::initial_state(&grid, &config.params, &config.run.initial);
        let trajectory = lift(stepper::integrate(&grid, initial, &config.run, &config.params, &config.therapy))?;
        *out = Box::into_raw(Box::new(PcaRun { config, grid, trajectory }));
        Ok(())
    })
}

/// Number of output samples, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pca_run_sample_count(run: *const PcaRun) -> usize {
    run.as_ref().map_or(0, |r| r.trajectory.samples.len())
}

/// Copy sample `index` into `out[0..PCA_SAMPLE_LEN]`, columns ordered as in
/// [`pca_series_header`].
///
/// # Safety
/// `run` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pca_run_sample(run: *const PcaRun, index: usize, out: *mut f64, len: usize) -> PcaStatus {
    guard(|| {
        let run = handle(run, "run")?;
        out_ptr(out, "out")?;
        if len < PCA_SAMPLE_LEN {
            return Err(fail(PcaStatus::InvalidArgument, format!("buffer holds {len} values, need {PCA_SAMPLE_LEN}")));
        }
        let sample = run.trajectory.samples.get(index).ok_or_else(|| {
            fail(PcaStatus::InvalidArgument, format!("sample {index} out of range"))
        })?;
        std::slice::from_raw_parts_mut(out, PCA_SAMPLE_LEN).copy_from_slice(&sample.values());
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from [`pca_run_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn pca_run_free(run: *mut PcaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Run every long-time check on a finished run.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pca_run_analyze(run: *const PcaRun, out: *mut *mut PcaReport) -> PcaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let run = handle(run, "run")?;
        let c = &run.config;
        let data = RunData::from_trajectory(&run.trajectory);
        let report = lift(analysis::analyze_run(&run.grid, &c.params, &c.therapy, &c.run, &data))?;
        let names = report.checks.iter().map(|k| CString::new(k.name).unwrap()).collect();
        *out = Box::into_raw(Box::new(PcaReport { report, names }));
        Ok(())
    })
}

/// True iff every asserted check passed; false for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pca_report_passed(report: *const PcaReport) -> bool {
    report.as_ref().is_some_and(|r| r.report.passed())
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pca_report_check_count(report: *const PcaReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.checks.len())
}

/// Name of check `index`, or null when out of range. Owned by the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pca_report_check_name(report: *const PcaReport, index: usize) -> *const c_char {
    report.as_ref().and_then(|r| r.names.get(index)).map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pca_report_check(report: *const PcaReport, index: usize, out: *mut PcaCheck) -> PcaStatus {
    guard(|| {
        let report = handle(report, "report")?;
        out_ptr(out, "out")?;
        let c = report.report.checks.get(index).ok_or_else(|| {
            fail(PcaStatus::InvalidArgument, format!("check {index} out of range"))
        })?;
        *out = PcaCheck { asserted: c.asserted, passed: c.passed, margin: c.margin };
        Ok(())
    })
}

/// Predicted decay rate; `Unavailable` when the convergence condition
/// does not hold.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pca_report_beta_predicted(report: *const PcaReport, out: *mut f64) -> PcaStatus {
    guard(|| {
        let report = handle(report, "report")?;
        out_ptr(out, "out")?;
        *out = report
            .report
            .predicted
            .beta
            .ok_or_else(|| fail(PcaStatus::Unavailable, "decay condition does not hold"))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or come from [`pca_run_analyze`], freed once.
#[no_mangle]
pub unsafe extern "C" fn pca_report_free(report: *mut PcaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Largest pairwise distance between the closed-form, discrete and
/// minimised steady states of the configured grid.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pca_steady_max_disagreement(cfg: *const PcaConfig, tol: f64, out: *mut f64) -> PcaStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        out_ptr(out, "out")?;
        let grid = lift(cfg.config.run.grid())?;
        let cmp = lift(steady::compare_routes(&grid, &cfg.config.params, tol))?;
        *out = cmp.max_disagreement();
        Ok(())
    })
}
