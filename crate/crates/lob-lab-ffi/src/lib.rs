//! C ABI over the equilibrium solver: opaque handles, status codes, and a
//! small set of scalar entry points. The header `include/lob_lab.h` is
//! regenerated by the build script.
//!
//! Ownership: `lob_lab_solve` allocates a path handle that must be released
//! with `lob_lab_path_free`. All other calls leave ownership untouched.

use lob_lab::solver::{solve_full, EquilibriumPath, ModelParams};
use lob_lab::sweep::critical_alpha;
use lob_lab::{gauss, Error};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LobLabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonConvergence = 3,
    IndexOutOfRange = 4,
    InternalError = 5,
}

fn status_of(err: &Error) -> LobLabStatus {
    match err {
        Error::Validation(_) | Error::InvalidControl { .. } | Error::Io(_) => {
            LobLabStatus::InvalidArgument
        }
        Error::NonConvergence { .. }
        | Error::NonMonotoneScan { .. }
        | Error::CoefficientBound { .. } => LobLabStatus::NonConvergence,
        Error::CheckFailed(_) => LobLabStatus::InternalError,
    }
}

/// Opaque handle to a constructed equilibrium path.
pub struct LobLabPath {
    inner: EquilibriumPath,
}

fn catch<F: FnOnce() -> LobLabStatus + std::panic::UnwindSafe>(f: F) -> LobLabStatus {
    std::panic::catch_unwind(f).unwrap_or(LobLabStatus::InternalError)
}

/// Construct the equilibrium path for the given model. On success writes a
/// heap-allocated handle to `out`; release it with `lob_lab_path_free`.
/// Degeneracy is a result, not an error: inspect
/// `lob_lab_path_degenerate_from`.
#[no_mangle]
pub extern "C" fn lob_lab_solve(
    alpha: f64,
    sigma: f64,
    horizon: f64,
    steps: u32,
    out: *mut *mut LobLabPath,
) -> LobLabStatus {
    if out.is_null() {
        return LobLabStatus::NullPointer;
    }
    catch(|| {
        let params = match ModelParams::new(alpha, sigma, horizon, steps as usize) {
            Ok(p) => p,
            Err(e) => return status_of(&e),
        };
        match solve_full(&params) {
            Ok(path) => {
                let handle = Box::new(LobLabPath { inner: path });
                unsafe { *out = Box::into_raw(handle) };
                LobLabStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Number of trading steps N; the path has N+1 index points 0..=N.
#[no_mangle]
pub extern "C" fn lob_lab_path_steps(path: *const LobLabPath, out: *mut u32) -> LobLabStatus {
    if path.is_null() || out.is_null() {
        return LobLabStatus::NullPointer;
    }
    let path = unsafe { &*path };
    unsafe { *out = path.inner.params.steps as u32 };
    LobLabStatus::Ok
}

/// First step of the degenerate prefix, or -1 when the whole horizon is
/// non-degenerate. Entries at indices <= this value are unset (NaN).
#[no_mangle]
pub extern "C" fn lob_lab_path_degenerate_from(
    path: *const LobLabPath,
    out: *mut i64,
) -> LobLabStatus {
    if path.is_null() || out.is_null() {
        return LobLabStatus::NullPointer;
    }
    let path = unsafe { &*path };
    unsafe { *out = path.inner.degenerate_from.map(|n| n as i64).unwrap_or(-1) };
    LobLabStatus::Ok
}

/// Relative quotes and expected execution prices at one index point.
/// Unset entries (degenerate prefix) are reported as NaN.
#[no_mangle]
pub extern "C" fn lob_lab_path_values(
    path: *const LobLabPath,
    index: u32,
    pa: *mut f64,
    pb: *mut f64,
    la: *mut f64,
    lb: *mut f64,
) -> LobLabStatus {
    if path.is_null() || pa.is_null() || pb.is_null() || la.is_null() || lb.is_null() {
        return LobLabStatus::NullPointer;
    }
    let path = unsafe { &*path };
    let i = index as usize;
    if i > path.inner.params.steps {
        return LobLabStatus::IndexOutOfRange;
    }
    unsafe {
        *pa = path.inner.pa[i];
        *pb = path.inner.pb[i];
        *la = path.inner.la[i];
        *lb = path.inner.lb[i];
    }
    LobLabStatus::Ok
}

/// Release a path handle. Passing NULL is a no-op.
#[no_mangle]
pub extern "C" fn lob_lab_path_free(path: *mut LobLabPath) {
    if !path.is_null() {
        drop(unsafe { Box::from_raw(path) });
    }
}

/// Largest drift with a non-degenerate construction on the whole horizon,
/// bisected to `tol`.
#[no_mangle]
pub extern "C" fn lob_lab_critical_alpha(
    steps: u32,
    sigma: f64,
    horizon: f64,
    tol: f64,
    alpha_star: *mut f64,
    bracket_width: *mut f64,
) -> LobLabStatus {
    if alpha_star.is_null() || bracket_width.is_null() {
        return LobLabStatus::NullPointer;
    }
    catch(|| match critical_alpha(steps as usize, sigma, horizon, tol) {
        Ok(result) => {
            unsafe {
                *alpha_star = result.alpha_star;
                *bracket_width = result.bracket_width;
            }
            LobLabStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Mills ratio (1 - F(p))/f(p) of the standard normal.
#[no_mangle]
pub extern "C" fn lob_lab_mills_ratio(p: f64) -> f64 {
    gauss::mills_ratio(p)
}

/// Inverse Mills ratio; `y` must be positive and finite.
#[no_mangle]
pub extern "C" fn lob_lab_mills_inverse(y: f64, out: *mut f64) -> LobLabStatus {
    if out.is_null() {
        return LobLabStatus::NullPointer;
    }
    match gauss::mills_inverse(y) {
        Ok(p) => {
            unsafe { *out = p };
            LobLabStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Expected relative profit of a limit sell at `p` against continuation
/// value `x`, for an increment N(mean, std^2).
#[no_mangle]
pub extern "C" fn lob_lab_sell_objective(
    p: f64,
    x: f64,
    mean: f64,
    std: f64,
    out: *mut f64,
) -> LobLabStatus {
    if out.is_null() {
        return LobLabStatus::NullPointer;
    }
    if !p.is_finite() || !x.is_finite() {
        return LobLabStatus::InvalidArgument;
    }
    match gauss::GaussianIncrement::new(mean, std) {
        Ok(inc) => {
            unsafe { *out = gauss::sell_objective(p, x, inc) };
            LobLabStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lob_lab_status_message(status: LobLabStatus) -> *const std::os::raw::c_char {
    let msg: &'static [u8] = match status {
        LobLabStatus::Ok => b"ok\0",
        LobLabStatus::NullPointer => b"null pointer argument\0",
        LobLabStatus::InvalidArgument => b"invalid argument\0",
        LobLabStatus::NonConvergence => b"iteration failed to converge\0",
        LobLabStatus::IndexOutOfRange => b"index out of range\0",
        LobLabStatus::InternalError => b"internal error\0",
    };
    msg.as_ptr() as *const std::os::raw::c_char
}
