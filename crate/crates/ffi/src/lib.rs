//! C ABI over the delta-sim solver.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`DsStatus`]
//! and leaves a message for [`ds_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use delta_sim::cavity::fixed_point_solve;
use delta_sim::config::{load_config, RunConfig};
use delta_sim::ensemble::signal_absorption_rate;
use delta_sim::output::write_result;
use delta_sim::scenarios::{microwave_power_sweep, optical_power_sweep, sweep_2d, Provenance};
use delta_sim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    NonConvergence = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsSweep {
    Sweep2d = 0,
    MwSweep = 1,
    OptSweep = 2,
}

/// Validated run configuration.
pub struct DsConfig {
    inner: RunConfig,
}

/// Converged operating point.
pub struct DsSolution {
    eta: f64,
    fields: DsFields,
    kappa_abs_hz: f64,
    iterations: usize,
    residual: f64,
}

/// Intracavity amplitudes, `√photons`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DsFields {
    pub b_re: f64,
    pub b_im: f64,
    pub a_re: f64,
    pub a_im: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
}

fn status_of(err: &Error) -> DsStatus {
    match err {
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Singular { .. } => {
            DsStatus::NonConvergence
        }
        Error::Io(_) | Error::Csv(_) => DsStatus::Io,
        _ => DsStatus::Config,
    }
}

fn guard(body: impl FnOnce() -> Result<(), DsStatus>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            DsStatus::Panic
        }
    }
}

fn fail(err: Error) -> DsStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

unsafe fn text<'a>(ptr: *const c_char) -> Result<&'a str, DsStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(DsStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        DsStatus::InvalidUtf8
    })
}

fn null(what: &str) -> DsStatus {
    set_error(format!("null {what}"));
    DsStatus::NullPointer
}

/// Copies `s` with a terminating NUL into `buf` when it fits and returns
/// the size needed including the NUL. `buf` may be null to query the size.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize) -> usize {
    let needed = s.len() + 1;
    if !buf.is_null() && len >= needed {
        std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
    }
    needed
}

unsafe fn store_config(
    out: *mut *mut DsConfig,
    config: delta_sim::Result<RunConfig>,
) -> Result<(), DsStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = std::ptr::null_mut();
    let inner = config.map_err(fail)?;
    *out = Box::into_raw(Box::new(DsConfig { inner }));
    Ok(())
}

/// Loads a JSON config file, or a bundled preset by name.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_config_load(path: *const c_char, out: *mut *mut DsConfig) -> DsStatus {
    guard(|| {
        let path = text(path)?;
        store_config(out, load_config(Path::new(path)))
    })
}

/// Parses a JSON config from memory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_config_from_json(
    json: *const c_char,
    out: *mut *mut DsConfig,
) -> DsStatus {
    guard(|| {
        let json = text(json)?;
        store_config(out, RunConfig::from_json(json))
    })
}

/// Applies one `key=value` override. On error the config is unchanged.
///
/// # Safety
/// `config` must come from `ds_config_*` and `item` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_config_override(
    config: *mut DsConfig,
    item: *const c_char,
) -> DsStatus {
    guard(|| {
        let config = config.as_mut().ok_or_else(|| null("config"))?;
        let item = text(item)?;
        config.inner = config.inner.with_overrides(&[item]).map_err(fail)?;
        Ok(())
    })
}

/// Writes the hex config hash into `buf`; returns the size needed.
///
/// # Safety
/// `config` must be valid; `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_config_hash(
    config: *const DsConfig,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match config.as_ref() {
        Some(c) => copy_out(&c.inner.hash(), buf, len),
        None => 0,
    }
}

/// # Safety
/// `config` must come from `ds_config_*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ds_config_free(config: *mut DsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Solves the configured operating point.
///
/// # Safety
/// `config` must be valid and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_solve(config: *const DsConfig, out: *mut *mut DsSolution) -> DsStatus {
    guard(|| {
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = std::ptr::null_mut();
        let system = config.inner.system().map_err(fail)?;
        let sol = fixed_point_solve(&system, &config.inner.numerics()).map_err(fail)?;
        let kappa_abs = signal_absorption_rate(&sol.response, &system.atom, &sol.grid);
        *out = Box::into_raw(Box::new(DsSolution {
            eta: sol.eta,
            fields: DsFields {
                b_re: sol.fields.b.re,
                b_im: sol.fields.b.im,
                a_re: sol.fields.a.re,
                a_im: sol.fields.a.im,
            },
            kappa_abs_hz: kappa_abs / (2.0 * std::f64::consts::PI),
            iterations: sol.iterations,
            residual: sol.residual,
        }));
        Ok(())
    })
}

/// Conversion efficiency; NaN for a null handle.
///
/// # Safety
/// `solution` must come from `ds_solve` or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_solution_eta(solution: *const DsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.eta)
}

/// Signal-mode absorption rate in Hz; NaN for a null handle.
///
/// # Safety
/// `solution` must come from `ds_solve` or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_solution_kappa_abs(solution: *const DsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.kappa_abs_hz)
}

/// # Safety
/// `solution` must come from `ds_solve` and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_solution_fields(
    solution: *const DsSolution,
    out: *mut DsFields,
) -> DsStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = s.fields;
        Ok(())
    })
}

/// Fixed-point iterations used; 0 for a null handle.
///
/// # Safety
/// `solution` must come from `ds_solve` or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_solution_iterations(solution: *const DsSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.iterations)
}

/// Last relative field update; NaN for a null handle.
///
/// # Safety
/// `solution` must come from `ds_solve` or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_solution_residual(solution: *const DsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.residual)
}

/// # Safety
/// `solution` must come from `ds_solve` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ds_solution_free(solution: *mut DsSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Runs one of the configured sweeps and writes its CSV to `path`.
/// Returns `NonConvergence` after writing if any cell failed.
///
/// # Safety
/// `config` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_run_sweep(
    config: *const DsConfig,
    kind: DsSweep,
    path: *const c_char,
) -> DsStatus {
    guard(|| {
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let path = text(path)?;
        let cfg = &config.inner;
        let system = cfg.system().map_err(fail)?;
        let numerics = cfg.numerics();
        let provenance = Provenance::new(cfg.hash());
        let result = match kind {
            DsSweep::Sweep2d => sweep_2d(&system, &numerics, &cfg.sweep2d_spec(), provenance),
            DsSweep::MwSweep => {
                microwave_power_sweep(&system, &numerics, &cfg.mw_sweep_spec(), provenance)
            }
            DsSweep::OptSweep => {
                optical_power_sweep(&system, &numerics, &cfg.opt_sweep_spec(), provenance)
            }
        }
        .map_err(fail)?;
        write_result(&result, path).map_err(fail)?;
        if !result.failures.is_empty() {
            set_error(format!(
                "{} of {} cells did not converge",
                result.failures.len(),
                result.cell_count()
            ));
            return Err(DsStatus::NonConvergence);
        }
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf`; returns the
/// size needed including the NUL.
///
/// # Safety
/// `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_out(&e.borrow(), buf, len))
}
