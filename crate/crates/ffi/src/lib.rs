//! C ABI for macrocal.
//!
//! Every function returns a [`MacrocalStatus`]. On failure the message is
//! available from [`macrocal_last_error`] on the same thread. Handles are
//! opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::size_t;
use macrocal::cli::{analyze, exit_code, Analysis, LoadedConfig};
use macrocal::sim::{run, Trajectory};
use macrocal::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacrocalStatus {
    Ok = 0,
    ConfigError = 2,
    AssumptionViolated = 3,
    Diverged = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Parsed configuration.
pub struct MacrocalConfig {
    loaded: LoadedConfig,
}

/// Result of one simulation run.
pub struct MacrocalTrajectory {
    traj: Trajectory,
}

/// Spectral analysis report.
pub struct MacrocalAnalysis {
    analysis: Analysis,
    text: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MacrocalStatus {
    match exit_code(e) {
        3 => MacrocalStatus::AssumptionViolated,
        4 => MacrocalStatus::Diverged,
        _ => MacrocalStatus::ConfigError,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), MacrocalStatus>) -> MacrocalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MacrocalStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            MacrocalStatus::Panic
        }
    }
}

fn fail(e: Error) -> MacrocalStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> MacrocalStatus {
    set_error(format!("{what} is null"));
    MacrocalStatus::NullPointer
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, MacrocalStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        MacrocalStatus::InvalidArgument
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, MacrocalStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), MacrocalStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; empty if nothing failed yet.
#[no_mangle]
pub extern "C" fn macrocal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn macrocal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn macrocal_config_from_toml(text: *const c_char, out: *mut *mut MacrocalConfig) -> MacrocalStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        let loaded = LoadedConfig::from_toml(text, "ffi", None).map_err(fail)?;
        loaded.resolve().map_err(fail)?;
        store(out, MacrocalConfig { loaded })
    })
}

/// Loads a bundled preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn macrocal_config_from_preset(name: *const c_char, out: *mut *mut MacrocalConfig) -> MacrocalStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let loaded = LoadedConfig::from_preset(name).map_err(fail)?;
        store(out, MacrocalConfig { loaded })
    })
}

/// Applies a `key.path=value` override.
///
/// # Safety
/// `cfg` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn macrocal_config_set(cfg: *mut MacrocalConfig, assignment: *const c_char) -> MacrocalStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let assignment = read_str(assignment, "assignment")?;
        let mut next = cfg.loaded.clone();
        next.set(assignment).map_err(fail)?;
        next.resolve().map_err(fail)?;
        cfg.loaded = next;
        Ok(())
    })
}

/// Number of sensor nodes.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_config_node_count(cfg: *const MacrocalConfig, out: *mut size_t) -> MacrocalStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let n = cfg.loaded.resolve().map_err(fail)?.node_count();
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = n;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn macrocal_config_free(cfg: *mut MacrocalConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Validates the configuration and simulates one run.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_run(cfg: *const MacrocalConfig, out: *mut *mut MacrocalTrajectory) -> MacrocalStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let sim = cfg.loaded.resolve().map_err(fail)?;
        let traj = run(&sim).map_err(fail)?;
        store(out, MacrocalTrajectory { traj })
    })
}

/// Number of nodes and recorded checkpoints.
///
/// # Safety
/// `traj` must come from this library; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_trajectory_shape(
    traj: *const MacrocalTrajectory,
    nodes: *mut size_t,
    checkpoints: *mut size_t,
) -> MacrocalStatus {
    guard(|| {
        let t = &handle(traj, "trajectory")?.traj;
        if nodes.is_null() || checkpoints.is_null() {
            return Err(null("output pointer"));
        }
        *nodes = t.n;
        *checkpoints = t.metrics.len();
        Ok(())
    })
}

/// Copies the final equivalent gains and offsets into `g` and `f`, which
/// must each hold `len` values, `len` being the node count.
///
/// # Safety
/// `g` and `f` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn macrocal_trajectory_final(
    traj: *const MacrocalTrajectory,
    g: *mut f64,
    f: *mut f64,
    len: size_t,
) -> MacrocalStatus {
    guard(|| {
        let t = &handle(traj, "trajectory")?.traj;
        if g.is_null() || f.is_null() {
            return Err(null("output array"));
        }
        if len != t.n {
            set_error(format!("buffer length {len} does not match {} nodes", t.n));
            return Err(MacrocalStatus::InvalidArgument);
        }
        for (i, r) in t.final_rho().iter().enumerate() {
            *g.add(i) = r.g;
            *f.add(i) = r.f;
        }
        Ok(())
    })
}

/// Metrics at checkpoint `index`.
///
/// # Safety
/// `traj` must come from this library; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_trajectory_metric(
    traj: *const MacrocalTrajectory,
    index: size_t,
    t: *mut u64,
    spread: *mut f64,
    dist_limit: *mut f64,
    mse_proj: *mut f64,
) -> MacrocalStatus {
    guard(|| {
        let tr = &handle(traj, "trajectory")?.traj;
        let m = tr.metrics.get(index).ok_or_else(|| {
            set_error(format!("checkpoint {index} out of range ({} recorded)", tr.metrics.len()));
            MacrocalStatus::InvalidArgument
        })?;
        if t.is_null() || spread.is_null() || dist_limit.is_null() || mse_proj.is_null() {
            return Err(null("output pointer"));
        }
        *t = m.t;
        *spread = m.spread;
        *dist_limit = m.dist_limit;
        *mse_proj = m.mse_proj;
        Ok(())
    })
}

/// # Safety
/// `traj` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn macrocal_trajectory_free(traj: *mut MacrocalTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Computes the spectral analysis of a configuration.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_analyze(cfg: *const MacrocalConfig, out: *mut *mut MacrocalAnalysis) -> MacrocalStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let sim = cfg.loaded.resolve().map_err(fail)?;
        let analysis = analyze(&sim).map_err(fail)?;
        let text = CString::new(analysis.text.clone()).unwrap_or_default();
        store(out, MacrocalAnalysis { analysis, text })
    })
}

/// Predicted consensus limit `(g, f)` of the free-running network.
///
/// # Safety
/// `a` must come from this library; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_analysis_limit(a: *const MacrocalAnalysis, g: *mut f64, f: *mut f64) -> MacrocalStatus {
    guard(|| {
        let a = &handle(a, "analysis")?.analysis;
        if g.is_null() || f.is_null() {
            return Err(null("output pointer"));
        }
        *g = a.consensus_limit.g;
        *f = a.consensus_limit.f;
        Ok(())
    })
}

/// Heuristic largest stable constant step size.
///
/// # Safety
/// `a` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn macrocal_analysis_safe_step(a: *const MacrocalAnalysis, out: *mut f64) -> MacrocalStatus {
    guard(|| {
        let a = &handle(a, "analysis")?.analysis;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = a.safe_step;
        Ok(())
    })
}

/// Plain-text report owned by the handle. Null if `a` is null.
///
/// # Safety
/// `a` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn macrocal_analysis_report(a: *const MacrocalAnalysis) -> *const c_char {
    a.as_ref().map_or(ptr::null(), |a| a.text.as_ptr())
}

/// # Safety
/// `a` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn macrocal_analysis_free(a: *mut MacrocalAnalysis) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}
