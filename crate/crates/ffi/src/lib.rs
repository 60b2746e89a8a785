//! C ABI over `resobs`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`ResobsStatus`]; on failure the message is available from
//! [`resobs_last_error`] on the same thread. Strings returned through out
//! parameters are released with [`resobs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use resobs::designer::{DesignArtifacts, DesignReport};
use resobs::metrics::VerificationReport;
use resobs::pipeline::{self, Command};
use resobs::scenario::Scenario;
use resobs::simulator::SimTrace;
use resobs::Error;

/// Status codes; the first five match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResobsStatus {
    Ok = 0,
    Usage = 1,
    Infeasible = 2,
    Divergence = 3,
    VerificationFailed = 4,
    InvalidArgument = 5,
    Panic = 6,
}

pub struct ResobsScenario {
    inner: Scenario,
}

pub struct ResobsDesign {
    artifacts: DesignArtifacts,
    report: DesignReport,
}

pub struct ResobsTrace {
    inner: SimTrace,
}

pub struct ResobsReport {
    inner: VerificationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_for(err: &Error) -> ResobsStatus {
    match pipeline::exit_code_for_error(err) {
        pipeline::EXIT_INFEASIBLE => ResobsStatus::Infeasible,
        pipeline::EXIT_DIVERGENCE => ResobsStatus::Divergence,
        _ => ResobsStatus::Usage,
    }
}

enum Failure {
    Lib(Error),
    Arg(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body`, converting errors and panics into a status plus last-error message.
fn guard(body: impl FnOnce() -> Result<ResobsStatus, Failure>) -> ResobsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(s)) => s,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_for(&e)
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            ResobsStatus::InvalidArgument
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ResobsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Arg(name))
}

unsafe fn as_str<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg("string argument is not valid UTF-8"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Arg("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn store_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Arg("output pointer is null"));
    }
    *out = CString::new(s)
        .map_err(|_| Failure::Arg("string contains NUL"))?
        .into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn resobs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn resobs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a TOML scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_scenario_load(path: *const c_char, out: *mut *mut ResobsScenario) -> ResobsStatus {
    guard(|| {
        let path = as_str(path, "path is null")?;
        let inner = resobs::scenario::load_scenario(Path::new(path))?;
        store(out, ResobsScenario { inner })?;
        Ok(ResobsStatus::Ok)
    })
}

/// Parses and validates a TOML scenario held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_scenario_parse(text: *const c_char, out: *mut *mut ResobsScenario) -> ResobsStatus {
    guard(|| {
        let inner = Scenario::parse(as_str(text, "text is null")?)?;
        store(out, ResobsScenario { inner })?;
        Ok(ResobsStatus::Ok)
    })
}

/// # Safety
/// `sc` must be NULL or a handle from `resobs_scenario_load`/`_parse`.
#[no_mangle]
pub unsafe extern "C" fn resobs_scenario_free(sc: *mut ResobsScenario) {
    free(sc);
}

/// Number of nodes, or 0 for a NULL handle.
///
/// # Safety
/// `sc` must be NULL or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn resobs_scenario_node_count(sc: *const ResobsScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.inner.node_count())
}

/// Replaces the attenuation levels and seed; a value is kept when its
/// `has_*` flag is zero.
///
/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn resobs_scenario_override(
    sc: *mut ResobsScenario,
    has_gamma: bool,
    gamma: f64,
    has_gamma_bar: bool,
    gamma_bar: f64,
    has_seed: bool,
    seed: u64,
) -> ResobsStatus {
    guard(|| {
        let s = sc.as_mut().ok_or(Failure::Arg("scenario is null"))?;
        s.inner = s.inner.with_overrides(
            has_gamma.then_some(gamma),
            has_gamma_bar.then_some(gamma_bar),
            has_seed.then_some(seed),
        )?;
        Ok(ResobsStatus::Ok)
    })
}

/// Runs the LMI pre-pass and every node's Riccati integration.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_design(sc: *const ResobsScenario, out: *mut *mut ResobsDesign) -> ResobsStatus {
    guard(|| {
        let sc = as_ref(sc, "scenario is null")?;
        let (artifacts, report) = pipeline::run_design(&sc.inner)?;
        store(out, ResobsDesign { artifacts, report })?;
        Ok(ResobsStatus::Ok)
    })
}

/// # Safety
/// `d` must be NULL or a handle from `resobs_design`.
#[no_mangle]
pub unsafe extern "C" fn resobs_design_free(d: *mut ResobsDesign) {
    free(d);
}

/// Design report as JSON; release with `resobs_string_free`.
///
/// # Safety
/// `d` must be a live design handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_design_report_json(d: *const ResobsDesign, out: *mut *mut c_char) -> ResobsStatus {
    guard(|| {
        let d = as_ref(d, "design is null")?;
        store_string(out, serde_json::to_string_pretty(&d.report).map_err(Error::from)?)?;
        Ok(ResobsStatus::Ok)
    })
}

/// Writes the gains on the design grid as CSV.
///
/// # Safety
/// `sc` and `d` must be live handles, `d` designed from `sc`; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn resobs_design_write_gains_csv(
    sc: *const ResobsScenario,
    d: *const ResobsDesign,
    path: *const c_char,
) -> ResobsStatus {
    guard(|| {
        let sc = as_ref(sc, "scenario is null")?;
        let d = as_ref(d, "design is null")?;
        let file = std::fs::File::create(as_str(path, "path is null")?).map_err(Error::from)?;
        pipeline::write_gains_csv(&d.artifacts, &sc.inner, std::io::BufWriter::new(file))?;
        Ok(ResobsStatus::Ok)
    })
}

/// Simulates the closed loop of `sc` with the gains in `d`.
///
/// # Safety
/// `sc` and `d` must be live handles, `d` designed from `sc`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_simulate(
    sc: *const ResobsScenario,
    d: *const ResobsDesign,
    out: *mut *mut ResobsTrace,
) -> ResobsStatus {
    guard(|| {
        let sc = as_ref(sc, "scenario is null")?;
        let d = as_ref(d, "design is null")?;
        let inner = pipeline::simulate_scenario(&sc.inner, &d.artifacts)?;
        store(out, ResobsTrace { inner })?;
        Ok(ResobsStatus::Ok)
    })
}

/// # Safety
/// `t` must be NULL or a handle from `resobs_simulate`.
#[no_mangle]
pub unsafe extern "C" fn resobs_trace_free(t: *mut ResobsTrace) {
    free(t);
}

/// Number of samples, or 0 for a NULL handle.
///
/// # Safety
/// `t` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn resobs_trace_len(t: *const ResobsTrace) -> usize {
    t.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies `x(t_k)` into `buf`, which must hold `state_dim` values.
///
/// # Safety
/// `t` must be a live trace handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn resobs_trace_state(
    t: *const ResobsTrace,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> ResobsStatus {
    guard(|| {
        let t = as_ref(t, "trace is null")?;
        if buf.is_null() {
            return Err(Failure::Arg("buffer is null"));
        }
        if k >= t.inner.len() {
            return Err(Failure::Arg("sample index out of range"));
        }
        let row = t.inner.x.row(k);
        if len < row.len() {
            return Err(Failure::Arg("buffer is shorter than the state dimension"));
        }
        std::slice::from_raw_parts_mut(buf, row.len()).copy_from_slice(row);
        Ok(ResobsStatus::Ok)
    })
}

/// # Safety
/// `t` must be a live trace handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn resobs_trace_write_csv(t: *const ResobsTrace, path: *const c_char) -> ResobsStatus {
    guard(|| {
        let t = as_ref(t, "trace is null")?;
        let file = std::fs::File::create(as_str(path, "path is null")?).map_err(Error::from)?;
        t.inner.write_csv(std::io::BufWriter::new(file))?;
        Ok(ResobsStatus::Ok)
    })
}

/// Checks every bound and the oracle equivalence for `t`. Returns
/// `RESOBS_STATUS_VERIFICATION_FAILED` (with the report still stored) when a
/// check fails.
///
/// # Safety
/// All handles must be live and derived from `sc`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_verify(
    sc: *const ResobsScenario,
    d: *const ResobsDesign,
    t: *const ResobsTrace,
    out: *mut *mut ResobsReport,
) -> ResobsStatus {
    guard(|| {
        let sc = as_ref(sc, "scenario is null")?;
        let d = as_ref(d, "design is null")?;
        let t = as_ref(t, "trace is null")?;
        let inner = pipeline::verify_trace(&sc.inner, &d.artifacts, &t.inner)?;
        let passed = inner.passed;
        store(out, ResobsReport { inner })?;
        Ok(if passed {
            ResobsStatus::Ok
        } else {
            ResobsStatus::VerificationFailed
        })
    })
}

/// # Safety
/// `r` must be NULL or a handle from `resobs_verify`.
#[no_mangle]
pub unsafe extern "C" fn resobs_report_free(r: *mut ResobsReport) {
    free(r);
}

/// Whether every check passed; false for a NULL handle.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn resobs_report_passed(r: *const ResobsReport) -> bool {
    r.as_ref().is_some_and(|r| r.inner.passed)
}

/// Verification report as JSON; release with `resobs_string_free`.
///
/// # Safety
/// `r` must be a live report handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resobs_report_json(r: *const ResobsReport, out: *mut *mut c_char) -> ResobsStatus {
    guard(|| {
        let r = as_ref(r, "report is null")?;
        store_string(out, serde_json::to_string_pretty(&r.inner).map_err(Error::from)?)?;
        Ok(ResobsStatus::Ok)
    })
}

/// Subcommand selector for `resobs_run_pipeline`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResobsCommand {
    Design = 0,
    Simulate = 1,
    Verify = 2,
}

/// Runs a whole command on a scenario file and writes its artifacts to
/// `out_dir`, like the command-line tool.
///
/// # Safety
/// `path` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn resobs_run_pipeline(
    path: *const c_char,
    command: ResobsCommand,
    out_dir: *const c_char,
) -> ResobsStatus {
    guard(|| {
        let path = as_str(path, "path is null")?;
        let dir = as_str(out_dir, "out_dir is null")?;
        let sc = resobs::scenario::load_scenario(Path::new(path))?;
        let cmd = match command {
            ResobsCommand::Design => Command::Design,
            ResobsCommand::Simulate => Command::Simulate,
            ResobsCommand::Verify => Command::Verify,
        };
        let out = pipeline::run_pipeline(&sc, cmd, Some(Path::new(dir)))?;
        Ok(if out.exit_code() == pipeline::EXIT_OK {
            ResobsStatus::Ok
        } else {
            ResobsStatus::VerificationFailed
        })
    })
}
