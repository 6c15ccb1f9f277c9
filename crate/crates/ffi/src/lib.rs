//! C ABI over `jumpconv`.
//!
//! Objects are opaque handles created by `jc_*_new` / `jc_path_sample` and
//! released with the matching `jc_*_free`. Every fallible call returns a
//! [`JcStatus`]; on failure [`jc_last_error`] describes the error on the
//! calling thread. Strings returned through out-parameters are owned by the
//! caller and released with [`jc_string_free`].

use jumpconv::cli::{self, CliError, Config};
use jumpconv::prm::{self, MarkSet, MarkSpace, PoissonPath};
use jumpconv::space::SmoothSpace;
use jumpconv::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes; 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Io = 3,
    Hypothesis = 4,
    NonFinite = 5,
    Domain = 6,
    NotContractive = 7,
    InvalidUtf8 = 8,
    Internal = 9,
    Panic = 10,
}

/// Finite mark space with its intensity weights.
pub struct JcMarkSpace(MarkSpace);

/// Sampled Poisson path on `[0, T]`.
pub struct JcPath(PoissonPath);

/// The sequence space `ℓ^r(d)` with smoothness exponent `q` and type exponent `p`.
pub struct JcSpace(SmoothSpace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: JcStatus, msg: impl Into<String>) -> JcStatus {
    set_error(msg);
    status
}

fn from_core(e: Error) -> JcStatus {
    let status = match &e {
        Error::Domain(_) => JcStatus::Domain,
        Error::NotContractive(_) => JcStatus::NotContractive,
        Error::Hypothesis(_) => JcStatus::Hypothesis,
        Error::Numeric(_) => JcStatus::NonFinite,
        Error::Internal(_) => JcStatus::Internal,
    };
    fail(status, e.to_string())
}

fn from_cli(e: CliError) -> JcStatus {
    let status = match &e {
        CliError::Config(_) => JcStatus::Config,
        CliError::Io(_) => JcStatus::Io,
        CliError::Hypothesis(_) => JcStatus::Hypothesis,
        CliError::Numeric(_) => JcStatus::NonFinite,
        CliError::Internal(_) => JcStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> JcStatus) -> JcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(JcStatus::Panic, "panic inside jumpconv"),
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

fn into_out<T>(out: *mut *mut T, value: T) -> JcStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    JcStatus::Ok
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn jc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mark space with `n` positive weights.
///
/// # Safety
/// `weights` must point to `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_markspace_new(weights: *const f64, n: usize, out: *mut *mut JcMarkSpace) -> JcStatus {
    guard(|| {
        let (Some(w), false) = (slice(weights, n), out.is_null()) else {
            return fail(JcStatus::NullPointer, "null argument");
        };
        match MarkSpace::new(w.to_vec()) {
            Ok(ms) => into_out(out, JcMarkSpace(ms)),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `ms` must be NULL or a handle from [`jc_markspace_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jc_markspace_free(ms: *mut JcMarkSpace) {
    if !ms.is_null() {
        drop(Box::from_raw(ms));
    }
}

/// Samples a path on `[0, horizon]` from the stream seeded with `seed`.
///
/// # Safety
/// `ms` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jc_path_sample(
    ms: *const JcMarkSpace,
    horizon: f64,
    seed: u64,
    out: *mut *mut JcPath,
) -> JcStatus {
    guard(|| {
        if ms.is_null() || out.is_null() {
            return fail(JcStatus::NullPointer, "null argument");
        }
        match prm::sample_path_seeded(&(*ms).0, horizon, seed) {
            Ok(p) => into_out(out, JcPath(p)),
            Err(e) => from_core(e),
        }
    })
}

/// Number of events on the path.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jc_path_len(path: *const JcPath, out: *mut usize) -> JcStatus {
    if path.is_null() || out.is_null() {
        return fail(JcStatus::NullPointer, "null argument");
    }
    *out = (*path).0.len();
    JcStatus::Ok
}

/// Time and mark index of event `i`, in time order.
///
/// # Safety
/// `path` must be a live handle; `time` and `mark` writable.
#[no_mangle]
pub unsafe extern "C" fn jc_path_event(path: *const JcPath, i: usize, time: *mut f64, mark: *mut usize) -> JcStatus {
    if path.is_null() || time.is_null() || mark.is_null() {
        return fail(JcStatus::NullPointer, "null argument");
    }
    match (*path).0.events().get(i) {
        Some(e) => {
            *time = e.time;
            *mark = e.mark;
            JcStatus::Ok
        }
        None => fail(JcStatus::Domain, format!("event index {i} out of range")),
    }
}

/// # Safety
/// `path` must be NULL or a handle from [`jc_path_sample`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jc_path_free(path: *mut JcPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// `Ñ((a, b] × A) = N((a, b] × A) - (b - a) ν(A)` with `A` given by `n_marks` indices.
///
/// # Safety
/// Handles must be live, `marks` must point to `n_marks` indices, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jc_compensated(
    ms: *const JcMarkSpace,
    path: *const JcPath,
    a: f64,
    b: f64,
    marks: *const usize,
    n_marks: usize,
    out: *mut f64,
) -> JcStatus {
    guard(|| {
        let Some(idx) = slice(marks, n_marks) else {
            return fail(JcStatus::NullPointer, "null argument");
        };
        if ms.is_null() || path.is_null() || out.is_null() {
            return fail(JcStatus::NullPointer, "null argument");
        }
        let ms = &(*ms).0;
        if let Some(k) = idx.iter().find(|k| **k >= ms.len()) {
            return fail(JcStatus::Domain, format!("mark index {k} outside the mark space"));
        }
        match prm::compensated(ms, &(*path).0, a, b, &MarkSet::from_indices(ms.len(), idx)) {
            Ok(v) => {
                *out = v;
                JcStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Space `ℓ^r(d)` with exponents `q` (smoothness) and `p` (type).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_space_new(d: usize, r: f64, q: f64, p: f64, out: *mut *mut JcSpace) -> JcStatus {
    guard(|| {
        if out.is_null() {
            return fail(JcStatus::NullPointer, "null argument");
        }
        match SmoothSpace::new(d, r, q, p) {
            Ok(s) => into_out(out, JcSpace(s)),
            Err(e) => from_core(e),
        }
    })
}

/// `‖x‖_r` and `φ(x) = ‖x‖^q` for a point of length `d`; either output may be NULL.
///
/// # Safety
/// `space` must be live and `x` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jc_space_norm(
    space: *const JcSpace,
    x: *const f64,
    len: usize,
    norm: *mut f64,
    phi: *mut f64,
) -> JcStatus {
    guard(|| {
        let Some(x) = slice(x, len) else {
            return fail(JcStatus::NullPointer, "null argument");
        };
        if space.is_null() {
            return fail(JcStatus::NullPointer, "null argument");
        }
        let sp = &(*space).0;
        if len != sp.d {
            return fail(JcStatus::Domain, format!("point of length {len} in dimension {}", sp.d));
        }
        if !norm.is_null() {
            *norm = sp.norm_of(x);
        }
        if !phi.is_null() {
            *phi = sp.phi_of(x);
        }
        JcStatus::Ok
    })
}

/// # Safety
/// `space` must be NULL or a handle from [`jc_space_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jc_space_free(space: *mut JcSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Runs the `[verify]` section of a TOML experiment config and writes the
/// report rows as a JSON array to `out_json`.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn jc_verify_config(config_toml: *const c_char, seed: u64, out_json: *mut *mut c_char) -> JcStatus {
    guard(|| {
        if config_toml.is_null() || out_json.is_null() {
            return fail(JcStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(config_toml).to_str() else {
            return fail(JcStatus::InvalidUtf8, "config is not valid UTF-8");
        };
        let cfg = match Config::parse(text) {
            Ok(c) => c,
            Err(e) => return from_cli(e),
        };
        let rows = match cli::run_verify(&cfg, seed) {
            Ok((rows, _)) => rows,
            Err(e) => return from_cli(e),
        };
        if let Some(r) = rows.iter().find(|r| !r.is_finite()) {
            return fail(JcStatus::NonFinite, format!("non-finite statistics for {}", r.scenario_id));
        }
        match serde_json::to_string(&rows).map(CString::new) {
            Ok(Ok(s)) => {
                *out_json = s.into_raw();
                JcStatus::Ok
            }
            _ => fail(JcStatus::Internal, "could not serialize the report"),
        }
    })
}
