//! C ABI over the `halfline-ie` solvers.
//!
//! Every fallible function returns an [`HlieStatus`]. On failure a
//! description is stored per thread and can be read with
//! [`hlie_last_error`]. Objects cross the boundary as opaque handles that
//! the caller releases with the matching `*_free` function; profiles are
//! copied into caller-owned `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use halfline_ie::config::RunConfig;
use halfline_ie::constants::Constants;
use halfline_ie::error::Error;
use halfline_ie::nonlinear::{solve_b_with, NonlinearContext, NonlinearSolution};
use halfline_ie::quadrature::Profile;
use halfline_ie::quasilinear::{solve_quasilinear, QuasilinearSolution};
use halfline_ie::runner::{nonlinear_problem, quasilinear_problem, run_subcommand, Subcommand};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlieStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidParameter = 4,
    NoConvergence = 5,
    Inadmissible = 6,
    BufferTooSmall = 7,
    IndexOutOfRange = 8,
    Io = 9,
    Panic = 10,
}

/// Parsed and validated run configuration.
pub struct HlieConfig {
    inner: RunConfig,
}

/// Converged `B` together with `F`, `Φ` and `χ`.
pub struct HlieNonlinear {
    inner: NonlinearSolution,
}

/// One converged `f_γ` per configured `γ`, sharing `ψ`, `g` and `H`.
pub struct HlieQuasilinear {
    inner: Vec<QuasilinearSolution>,
}

/// Profiles held by an [`HlieNonlinear`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlieNonlinearField {
    X = 0,
    F = 1,
    Phi = 2,
    B = 3,
    Chi = 4,
}

/// Profiles held by an [`HlieQuasilinear`] for a single `γ`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlieQuasilinearField {
    X = 0,
    F = 1,
    GammaX = 2,
    Psi = 3,
    G = 4,
    H = 5,
}

/// Characteristic constants. `sigma0`, `k_rate` and `c_bound` are NaN until
/// `χ` has been computed.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlieConstants {
    pub m: f64,
    pub xi: f64,
    pub eta: f64,
    pub epsilon0: f64,
    pub sigma0: f64,
    pub k_rate: f64,
    pub c_bound: f64,
}

/// Scalar outcomes of a nonlinear solve. Absent quantities are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlieNonlinearStats {
    pub iterations_b: usize,
    pub iterations_f: usize,
    pub iterations_phi: usize,
    pub residual: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub xi_margin: f64,
    pub fitted_rate: f64,
    pub envelope_ratio: f64,
}

/// Scalar outcomes of one quasilinear solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlieQuasilinearStats {
    pub gamma: f64,
    pub iterations: usize,
    pub residual: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub slope_point: f64,
    pub slope_estimate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure {
    status: HlieStatus,
    message: String,
}

impl Failure {
    fn new(status: HlieStatus, message: impl Into<String>) -> Failure {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let status = match &e {
            Error::Config(_) => HlieStatus::InvalidConfig,
            Error::InvalidParameter { .. }
            | Error::InvalidGrid(_)
            | Error::UnknownCatalogEntry(_)
            | Error::LengthMismatch { .. } => HlieStatus::InvalidParameter,
            Error::IterationCap { .. }
            | Error::Divergence { .. }
            | Error::NonFinite { .. }
            | Error::NoRoot(_)
            | Error::InsufficientIterations { .. } => HlieStatus::NoConvergence,
            Error::DivergentIntegral(_)
            | Error::RateOutOfRange { .. }
            | Error::SandwichViolation { .. }
            | Error::DegenerateChi { .. }
            | Error::UniquenessMismatch { .. }
            | Error::ConfigMismatch(..) => HlieStatus::Inadmissible,
            Error::Io(_) | Error::Json(_) => HlieStatus::Io,
        };
        Failure::new(status, e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(body: F) -> HlieStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HlieStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(f.message);
            f.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal panic: {message}"));
            HlieStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(HlieStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(HlieStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(HlieStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(HlieStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(HlieStatus::NullPointer, "`out` is null"));
    }
    if len < values.len() {
        return Err(Failure::new(
            HlieStatus::BufferTooSmall,
            format!("buffer holds {len} values, profile has {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

impl From<&Constants> for HlieConstants {
    fn from(c: &Constants) -> HlieConstants {
        HlieConstants {
            m: c.m,
            xi: c.xi,
            eta: c.eta,
            epsilon0: c.epsilon0,
            sigma0: or_nan(c.sigma0),
            k_rate: or_nan(c.k_rate),
            c_bound: or_nan(c.c_bound),
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hlie_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or NULL when the last
/// call succeeded. The pointer stays valid until the next call into the
/// library from the same thread.
#[no_mangle]
pub extern "C" fn hlie_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hlie_config_from_toml(toml: *const c_char, out: *mut *mut HlieConfig) -> HlieStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(toml, "toml")?;
        let inner = RunConfig::from_toml_str(text)?;
        *out = Box::into_raw(Box::new(HlieConfig { inner }));
        Ok(())
    })
}

/// Overrides the output directory of a configuration.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `dir` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hlie_config_set_output(cfg: *mut HlieConfig, dir: *const c_char) -> HlieStatus {
    guard(|| {
        let cfg = borrow_mut(cfg, "cfg")?;
        cfg.inner.output = PathBuf::from(read_str(dir, "dir")?);
        Ok(())
    })
}

/// Number of grid nodes of a configuration.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_config_grid_len(cfg: *const HlieConfig, out: *mut usize) -> HlieStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        *borrow_mut(out, "out")? = cfg.inner.grid.n;
        Ok(())
    })
}

/// SHA-256 digest of the configuration, as a NUL-terminated hex string of 64
/// characters written into `out` (capacity `len`, at least 65).
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `out` must point to `len`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hlie_config_hash(cfg: *const HlieConfig, out: *mut c_char, len: usize) -> HlieStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        if out.is_null() {
            return Err(Failure::new(HlieStatus::NullPointer, "`out` is null"));
        }
        let hash = cfg.inner.hash();
        if len <= hash.len() {
            return Err(Failure::new(
                HlieStatus::BufferTooSmall,
                format!("hash needs {} bytes, buffer has {len}", hash.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), out, hash.len());
        *out.add(hash.len()) = 0;
        Ok(())
    })
}

/// `M`, `η`, `ξ` and `ε₀` of the nonlinear problem described by `cfg`,
/// without solving it.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_config_constants(cfg: *const HlieConfig, out: *mut HlieConstants) -> HlieStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let out = borrow_mut(out, "out")?;
        let problem = nonlinear_problem(&cfg.inner)?;
        *out = HlieConstants::from(&problem.constants);
        Ok(())
    })
}

/// Releases a configuration. NULL is ignored.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hlie_config_free(cfg: *mut HlieConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a CLI subcommand (`validate`, `solve-quasilinear`, `solve-nonlinear`
/// or `report`), writing artifacts to the configured output directory. The
/// report JSON is returned in `report_json` (release with
/// [`hlie_string_free`]) and `all_passed` tells whether every check passed.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `command` must be a
/// NUL-terminated string; `report_json` and `all_passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_run(
    cfg: *const HlieConfig,
    command: *const c_char,
    report_json: *mut *mut c_char,
    all_passed: *mut bool,
) -> HlieStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let report_json = borrow_mut(report_json, "report_json")?;
        *report_json = ptr::null_mut();
        let all_passed = borrow_mut(all_passed, "all_passed")?;
        let cmd: Subcommand = read_str(command, "command")?.parse()?;
        let report = run_subcommand(cmd, &cfg.inner)?;
        let json = CString::new(report.to_json()?).map_err(|e| Failure::new(HlieStatus::Io, e.to_string()))?;
        *all_passed = report.all_passed();
        *report_json = json.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hlie_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves the nonlinear equation described by `cfg`.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_solve_nonlinear(cfg: *const HlieConfig, out: *mut *mut HlieNonlinear) -> HlieStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let problem = nonlinear_problem(&cfg.inner)?;
        let ctx = NonlinearContext::new(&problem);
        let inner = solve_b_with(&ctx, false)?;
        *out = Box::into_raw(Box::new(HlieNonlinear { inner }));
        Ok(())
    })
}

/// Number of grid nodes of a nonlinear solution.
///
/// # Safety
/// `sol` must come from [`hlie_solve_nonlinear`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_nonlinear_len(sol: *const HlieNonlinear, out: *mut usize) -> HlieStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        *borrow_mut(out, "out")? = sol.inner.b.values.len();
        Ok(())
    })
}

fn nonlinear_profile(sol: &NonlinearSolution, field: HlieNonlinearField) -> &[f64] {
    match field {
        HlieNonlinearField::X => sol.b.grid.nodes(),
        HlieNonlinearField::F => &sol.f.values,
        HlieNonlinearField::Phi => &sol.phi.values,
        HlieNonlinearField::B => &sol.b.values,
        HlieNonlinearField::Chi => &sol.chi.values,
    }
}

/// Copies one profile of a nonlinear solution into `out` (capacity `len`).
///
/// # Safety
/// `sol` must come from [`hlie_solve_nonlinear`]; `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hlie_nonlinear_copy(
    sol: *const HlieNonlinear,
    field: HlieNonlinearField,
    out: *mut f64,
    len: usize,
) -> HlieStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        copy_out(nonlinear_profile(&sol.inner, field), out, len)
    })
}

/// Constants of a nonlinear solution, including `σ₀`, `k` and `C`.
///
/// # Safety
/// `sol` must come from [`hlie_solve_nonlinear`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_nonlinear_constants(sol: *const HlieNonlinear, out: *mut HlieConstants) -> HlieStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        *borrow_mut(out, "out")? = HlieConstants::from(&sol.inner.constants);
        Ok(())
    })
}

/// Iteration counts, residual, margins and rate diagnostics of a nonlinear
/// solution.
///
/// # Safety
/// `sol` must come from [`hlie_solve_nonlinear`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_nonlinear_stats(sol: *const HlieNonlinear, out: *mut HlieNonlinearStats) -> HlieStatus {
    guard(|| {
        let s = &borrow(sol, "sol")?.inner;
        *borrow_mut(out, "out")? = HlieNonlinearStats {
            iterations_b: s.trace.iterations,
            iterations_f: s.f_trace.iterations,
            iterations_phi: s.phi_trace.iterations,
            residual: s.residual,
            lower_margin: s.lower_margin,
            upper_margin: s.upper_margin,
            xi_margin: s.xi_margin,
            fitted_rate: or_nan(s.rate.as_ref().and_then(|r| r.fitted_rate)),
            envelope_ratio: or_nan(s.rate.as_ref().map(|r| r.max_ratio)),
        };
        Ok(())
    })
}

/// Releases a nonlinear solution. NULL is ignored.
///
/// # Safety
/// `sol` must come from [`hlie_solve_nonlinear`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hlie_nonlinear_free(sol: *mut HlieNonlinear) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Solves the quasilinear equation for every `γ` of `cfg`.
///
/// # Safety
/// `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_solve_quasilinear(cfg: *const HlieConfig, out: *mut *mut HlieQuasilinear) -> HlieStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let problem = quasilinear_problem(&cfg.inner)?;
        let inner = solve_quasilinear(&problem)?;
        *out = Box::into_raw(Box::new(HlieQuasilinear { inner }));
        Ok(())
    })
}

/// Number of `γ` values solved.
///
/// # Safety
/// `sol` must come from [`hlie_solve_quasilinear`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_quasilinear_count(sol: *const HlieQuasilinear, out: *mut usize) -> HlieStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        *borrow_mut(out, "out")? = sol.inner.len();
        Ok(())
    })
}

/// Number of grid nodes of a quasilinear solution.
///
/// # Safety
/// `sol` must come from [`hlie_solve_quasilinear`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_quasilinear_len(sol: *const HlieQuasilinear, out: *mut usize) -> HlieStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        *borrow_mut(out, "out")? = sol.inner.first().map_or(0, |s| s.f.values.len());
        Ok(())
    })
}

fn quasilinear_at(sol: &HlieQuasilinear, index: usize) -> Result<&QuasilinearSolution, Failure> {
    sol.inner.get(index).ok_or_else(|| {
        Failure::new(
            HlieStatus::IndexOutOfRange,
            format!("index {index} out of range for {} solutions", sol.inner.len()),
        )
    })
}

fn quasilinear_profile(s: &QuasilinearSolution, field: HlieQuasilinearField) -> Vec<f64> {
    let pick = |p: &Profile| p.values.clone();
    match field {
        HlieQuasilinearField::X => s.f.grid.nodes().to_vec(),
        HlieQuasilinearField::F => pick(&s.f),
        HlieQuasilinearField::GammaX => s.f.grid.nodes().iter().map(|x| s.gamma * x).collect(),
        HlieQuasilinearField::Psi => pick(s.psi()),
        HlieQuasilinearField::G => pick(s.g()),
        HlieQuasilinearField::H => pick(s.h()),
    }
}

/// Copies one profile of the `index`-th quasilinear solution into `out`
/// (capacity `len`).
///
/// # Safety
/// `sol` must come from [`hlie_solve_quasilinear`]; `out` must point to
/// `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hlie_quasilinear_copy(
    sol: *const HlieQuasilinear,
    index: usize,
    field: HlieQuasilinearField,
    out: *mut f64,
    len: usize,
) -> HlieStatus {
    guard(|| {
        let s = quasilinear_at(borrow(sol, "sol")?, index)?;
        copy_out(&quasilinear_profile(s, field), out, len)
    })
}

/// Scalar outcomes of the `index`-th quasilinear solution.
///
/// # Safety
/// `sol` must come from [`hlie_solve_quasilinear`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hlie_quasilinear_stats(
    sol: *const HlieQuasilinear,
    index: usize,
    out: *mut HlieQuasilinearStats,
) -> HlieStatus {
    guard(|| {
        let s = quasilinear_at(borrow(sol, "sol")?, index)?;
        *borrow_mut(out, "out")? = HlieQuasilinearStats {
            gamma: s.gamma,
            iterations: s.trace.iterations,
            residual: s.residual,
            lower_margin: s.lower_margin,
            upper_margin: s.upper_margin,
            slope_point: s.slope_point,
            slope_estimate: s.slope_estimate,
        };
        Ok(())
    })
}

/// Releases a quasilinear solution. NULL is ignored.
///
/// # Safety
/// `sol` must come from [`hlie_solve_quasilinear`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn hlie_quasilinear_free(sol: *mut HlieQuasilinear) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}
