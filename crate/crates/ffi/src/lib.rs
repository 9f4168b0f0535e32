//! C interface to `pdex`.
//!
//! Objects are exposed as opaque handles returned through out-pointers by
//! constructors such as `pdex_dataset_read`, and released with the matching
//! `_free`. Every fallible call
//! returns a [`PdexStatus`]; on failure a description is available from
//! [`pdex_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pdex::datasets::{self, GridDataset};
use pdex::experiment::{self, Equation, ExperimentConfig, GeneratorSpec};
use pdex::jet::{Coord, Jet, MAX_ORDER};
use pdex::network::RationalNetwork;
use pdex::regression::PDEReport;
use pdex::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdexStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad configuration, argument value or string encoding.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A file was read but its contents are malformed.
    Format = 4,
    /// A numerical failure: pole hit, unstable solver, degenerate library.
    Numerical = 5,
    /// An internal error or a caught panic.
    Internal = 6,
}

/// Grid dataset handle.
pub struct PdexDataset {
    inner: GridDataset,
}

/// Trained network handle.
pub struct PdexNetwork {
    inner: RationalNetwork,
}

/// Ranked candidate report handle.
pub struct PdexReport {
    inner: PDEReport,
    json: CString,
    equations: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> PdexStatus {
    match err {
        Error::Config(_) | Error::OrderTooHigh(_) => PdexStatus::InvalidArgument,
        Error::Io { .. } => PdexStatus::Io,
        Error::Format { .. } | Error::SizeMismatch { .. } | Error::Json(_) => PdexStatus::Format,
        Error::Pole { .. }
        | Error::DivisionByZero { .. }
        | Error::Instability(_)
        | Error::TrainingAborted { .. }
        | Error::FitFailure(_)
        | Error::ZeroColumn { .. } => PdexStatus::Numerical,
        _ => PdexStatus::Internal,
    }
}

struct Failure(PdexStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PdexStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PdexStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PdexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdexStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            PdexStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(invalid(format!("buffer holds {len} values, {} required", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn pdex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pdex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Solves a benchmark equation (`"heat"`, `"burgers"`, `"kdv"`).
///
/// `ic` may be null for the default initial condition; a NaN `coefficient`
/// and zero `nx`/`nt` select the per-equation defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_generate(
    equation: *const c_char,
    ic: *const c_char,
    coefficient: f64,
    nx: usize,
    nt: usize,
    out: *mut *mut PdexDataset,
) -> PdexStatus {
    guard(|| {
        let spec = GeneratorSpec {
            equation: str_arg(equation, "equation")?.parse::<Equation>()?,
            ic: opt_str_arg(ic, "ic")?.map(str::to_owned),
            coefficient: (!coefficient.is_nan()).then_some(coefficient),
            nx: (nx > 0).then_some(nx),
            nt: (nt > 0).then_some(nt),
            dt: None,
        };
        put(out, PdexDataset { inner: spec.generate()? })
    })
}

/// Reads a dataset file (or a complete-grid `t,x,u` CSV).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_read(path: *const c_char, out: *mut *mut PdexDataset) -> PdexStatus {
    guard(|| {
        let ds = datasets::read_dataset(&PathBuf::from(str_arg(path, "path")?))?;
        put(out, PdexDataset { inner: ds })
    })
}

/// Writes a dataset file plus its JSON metadata sidecar.
///
/// # Safety
/// `ds` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_write(ds: *const PdexDataset, path: *const c_char) -> PdexStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        datasets::write_dataset(&ds.inner, &PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Returns a noisy copy: Gaussian noise with std `noise` times the data std.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_corrupt(
    ds: *const PdexDataset,
    noise: f64,
    seed: u64,
    out: *mut *mut PdexDataset,
) -> PdexStatus {
    guard(|| {
        let noisy = datasets::inject_noise(&handle(ds, "dataset")?.inner, noise, seed)?;
        put(out, PdexDataset { inner: noisy })
    })
}

/// Grid sizes: `n_t` rows (time) by `n_x` columns (space).
///
/// # Safety
/// `ds` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_shape(ds: *const PdexDataset, n_t: *mut usize, n_x: *mut usize) -> PdexStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        if n_t.is_null() || n_x.is_null() {
            return Err(null("shape output"));
        }
        *n_t = ds.inner.t.len();
        *n_x = ds.inner.x.len();
        Ok(())
    })
}

/// Copies the spatial grid into `buf` (at least `n_x` values).
///
/// # Safety
/// `ds` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_x(ds: *const PdexDataset, buf: *mut f64, len: usize) -> PdexStatus {
    guard(|| copy_out(&handle(ds, "dataset")?.inner.x, buf, len))
}

/// Copies the time grid into `buf` (at least `n_t` values).
///
/// # Safety
/// `ds` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_t(ds: *const PdexDataset, buf: *mut f64, len: usize) -> PdexStatus {
    guard(|| copy_out(&handle(ds, "dataset")?.inner.t, buf, len))
}

/// Copies the values row-major (`values[i * n_x + j]` at `t[i]`, `x[j]`).
///
/// # Safety
/// `ds` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_values(ds: *const PdexDataset, buf: *mut f64, len: usize) -> PdexStatus {
    guard(|| {
        let values = &handle(ds, "dataset")?.inner.values;
        let flat: Vec<f64> = values.iter().copied().collect();
        copy_out(&flat, buf, len)
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdex_dataset_free(ds: *mut PdexDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Loads a network checkpoint (`u.json` / `n.json` of a run directory).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_network_load(path: *const c_char, out: *mut *mut PdexNetwork) -> PdexStatus {
    guard(|| {
        let net = RationalNetwork::load(&PathBuf::from(str_arg(path, "path")?))?;
        put(out, PdexNetwork { inner: net })
    })
}

/// Number of inputs the network expects.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_network_input_width(net: *const PdexNetwork, out: *mut usize) -> PdexStatus {
    guard(|| {
        let net = handle(net, "network")?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = net.inner.input_width();
        Ok(())
    })
}

/// Evaluates the network at `input[0..len]`.
///
/// # Safety
/// `net` must be a live handle; `input` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_network_eval(
    net: *const PdexNetwork,
    input: *const f64,
    len: usize,
    out: *mut f64,
) -> PdexStatus {
    guard(|| {
        let net = handle(net, "network")?;
        if input.is_null() || out.is_null() {
            return Err(null("input or output"));
        }
        let x = std::slice::from_raw_parts(input, len);
        if len != net.inner.input_width() {
            return Err(invalid(format!("expected {} inputs, got {len}", net.inner.input_width())));
        }
        *out = net.inner.eval(x)?;
        Ok(())
    })
}

/// Exact derivatives of a two-input `(x, t)` network at one point.
///
/// Writes `value`, `d^k/dx^k` for `k = 1..=order` into `dx[0..order]`, and
/// the first time derivative into `dt`. `order` is at most 4.
///
/// # Safety
/// `net` must be a live handle; `dx` must hold `order` doubles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_network_derivatives(
    net: *const PdexNetwork,
    x: f64,
    t: f64,
    order: usize,
    value: *mut f64,
    dx: *mut f64,
    dt: *mut f64,
) -> PdexStatus {
    guard(|| {
        let net = handle(net, "network")?;
        if net.inner.input_width() != 2 {
            return Err(invalid("derivatives need a two-input (x, t) network"));
        }
        if order > MAX_ORDER {
            return Err(invalid(format!("order {order} exceeds {MAX_ORDER}")));
        }
        if value.is_null() || dt.is_null() || (order > 0 && dx.is_null()) {
            return Err(null("output"));
        }
        let jet = net.inner.forward(&[Jet::seed(x, Coord::X, order), Jet::seed(t, Coord::T, order)])?;
        *value = jet.val;
        *dt = jet.dt;
        if order > 0 {
            ptr::copy_nonoverlapping(jet.dx.as_ptr(), dx, order);
        }
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdex_network_free(net: *mut PdexNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

fn report_handle(inner: PDEReport) -> Result<PdexReport, Failure> {
    let json = CString::new(inner.to_json()?).map_err(|e| Failure(PdexStatus::Internal, e.to_string()))?;
    let equations = inner
        .candidates
        .iter()
        .map(|c| CString::new(c.equation.as_str()))
        .collect::<Result<_, _>>()
        .map_err(|e| Failure(PdexStatus::Internal, e.to_string()))?;
    Ok(PdexReport { inner, json, equations })
}

/// Runs a full discovery from an experiment configuration given as JSON text.
///
/// Long-running: trains both networks for the configured epochs.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_discover(config_json: *const c_char, out: *mut *mut PdexReport) -> PdexStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config")?)?;
        let run = experiment::discover(&cfg)?;
        put(out, report_handle(run.report)?)
    })
}

/// Reads a `report.json` written by a discovery run.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_report_read(path: *const c_char, out: *mut *mut PdexReport) -> PdexStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let text = std::fs::read_to_string(&path).map_err(|e| Failure(PdexStatus::Io, format!("{}: {e}", path.display())))?;
        let report = PDEReport::from_json(&text)
            .map_err(|e| Failure(PdexStatus::Format, format!("{}: {e}", path.display())))?;
        put(out, report_handle(report)?)
    })
}

/// Number of ranked candidates (at most 5).
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_report_len(report: *const PdexReport, out: *mut usize) -> PdexStatus {
    guard(|| {
        let report = handle(report, "report")?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = report.inner.candidates.len();
        Ok(())
    })
}

/// Equation text of candidate `index` (0 = best), owned by the report.
///
/// Returns null on a bad handle or index.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdex_report_equation(report: *const PdexReport, index: usize) -> *const c_char {
    match report.as_ref().and_then(|r| r.equations.get(index)) {
        Some(s) => s.as_ptr(),
        None => {
            set_error(format!("no candidate {index}"));
            ptr::null()
        }
    }
}

/// Ratio of candidate `index` to the next sparser one, in percent.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_report_ratio_percent(report: *const PdexReport, index: usize, out: *mut f64) -> PdexStatus {
    guard(|| {
        let c = handle(report, "report")?
            .inner
            .candidates
            .get(index)
            .ok_or_else(|| invalid(format!("no candidate {index}")))?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = c.ratio_percent;
        Ok(())
    })
}

/// Whole report as pretty JSON, owned by the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdex_report_json(report: *const PdexReport) -> *const c_char {
    match report.as_ref() {
        Some(r) => r.json.as_ptr(),
        None => {
            set_error("report is null".into());
            ptr::null()
        }
    }
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdex_report_free(report: *mut PdexReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs one self-check suite (1-5 or 9) and reports whether it passed.
///
/// # Safety
/// `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdex_verify_suite(suite: u8, passed: *mut bool) -> PdexStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("output"));
        }
        let r = pdex::verify::run_suite(suite)?;
        *passed = r.passed;
        if !r.passed {
            set_error(r.detail);
        }
        Ok(())
    })
}
