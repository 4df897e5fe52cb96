//! C ABI over the kernel.
//!
//! A `TeaRuntime` is an opaque handle owning one kernel. Requests and
//! results cross the boundary as canonical JSON text. Strings returned by
//! this library are owned by the caller and released with
//! `tea_string_free`. Handles may be shared across threads.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use tea_core::value::canonical_string;
use tea_core::wire::WireError;
use tea_core::{Dispatcher, Error, ErrorKind, Map, ResponseEnvelope, Tea, Value};

/// Result code of every fallible entry point. Codes 1 to 10 mirror the
/// kernel's error kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeaStatus {
    Ok = 0,
    NotFound = 1,
    NameConflict = 2,
    VersionNotFound = 3,
    ValidationFailed = 4,
    ActionNotFound = 5,
    BackendFailure = 6,
    ProtocolError = 7,
    LifecycleViolation = 8,
    EvolutionRejected = 9,
    PersistenceError = 10,
    /// A null pointer or non-UTF-8 string was passed.
    InvalidArgument = 64,
    /// The call panicked; the runtime should be discarded.
    Panic = 65,
}

impl From<ErrorKind> for TeaStatus {
    fn from(k: ErrorKind) -> Self {
        match k {
            ErrorKind::NotFound => TeaStatus::NotFound,
            ErrorKind::NameConflict => TeaStatus::NameConflict,
            ErrorKind::VersionNotFound => TeaStatus::VersionNotFound,
            ErrorKind::ValidationFailed => TeaStatus::ValidationFailed,
            ErrorKind::ActionNotFound => TeaStatus::ActionNotFound,
            ErrorKind::BackendFailure => TeaStatus::BackendFailure,
            ErrorKind::ProtocolError => TeaStatus::ProtocolError,
            ErrorKind::LifecycleViolation => TeaStatus::LifecycleViolation,
            ErrorKind::EvolutionRejected => TeaStatus::EvolutionRejected,
            ErrorKind::PersistenceError => TeaStatus::PersistenceError,
        }
    }
}

/// Opaque kernel handle.
pub struct TeaRuntime {
    dispatcher: Dispatcher,
}

unsafe fn text<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

fn owned(s: String) -> *mut c_char {
    // interior NULs cannot occur in canonical JSON; escape them defensively
    CString::new(s.replace('\0', "\\u0000")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn guard<T>(fallback: T, f: impl FnOnce() -> T) -> T {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(fallback)
}

fn status_of(r: tea_core::Result<()>) -> TeaStatus {
    match r {
        Ok(()) => TeaStatus::Ok,
        Err(e) => e.kind.into(),
    }
}

/// Creates an empty runtime with the built-in behaviors. Never null.
#[no_mangle]
pub extern "C" fn tea_runtime_new() -> *mut TeaRuntime {
    let rt = TeaRuntime { dispatcher: Dispatcher::with_data_dir(Tea::new(), None) };
    Box::into_raw(Box::new(rt))
}

/// Creates a runtime rooted at `data_dir`, loading its manifests when the
/// directory exists. On success `*out` receives the handle.
///
/// # Safety
/// `data_dir` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tea_runtime_open(data_dir: *const c_char, out: *mut *mut TeaRuntime) -> TeaStatus {
    if out.is_null() {
        return TeaStatus::InvalidArgument;
    }
    *out = ptr::null_mut();
    let Some(dir) = text(data_dir) else {
        return TeaStatus::InvalidArgument;
    };
    guard(TeaStatus::Panic, || {
        let tea = Tea::new();
        let dir = PathBuf::from(dir);
        if dir.is_dir() {
            if let Err(e) = tea.load_dir(&dir) {
                return e.kind.into();
            }
        }
        let rt = TeaRuntime { dispatcher: Dispatcher::with_data_dir(tea, Some(dir)) };
        *out = Box::into_raw(Box::new(rt));
        TeaStatus::Ok
    })
}

/// Releases a runtime. Null is ignored.
///
/// # Safety
/// `rt` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tea_runtime_free(rt: *mut TeaRuntime) {
    if !rt.is_null() {
        drop(Box::from_raw(rt));
    }
}

/// Handles one request envelope and returns the response envelope as a
/// single line without the trailing newline. Returns null only when `rt`
/// is null.
///
/// # Safety
/// `rt` must be a live handle; `request` a valid C string or null.
#[no_mangle]
pub unsafe extern "C" fn tea_dispatch(rt: *const TeaRuntime, request: *const c_char) -> *mut c_char {
    let Some(rt) = rt.as_ref() else {
        return ptr::null_mut();
    };
    let response = match text(request) {
        None => ResponseEnvelope::failure(String::new(), Error::protocol("request is null or not UTF-8")),
        Some(line) => guard(ResponseEnvelope::failure(String::new(), Error::protocol("request handler panicked")), || {
            rt.dispatcher.dispatch_line(line)
        }),
    };
    owned(response.to_line().trim_end().to_owned())
}

/// Runs one op with `params_json` (a mapping, or null for none). On success
/// `*out_json` holds the canonical result; on failure it holds
/// `{"detail":..,"kind":..,"reasons":[..]}`. The caller frees `*out_json`.
///
/// # Safety
/// `rt` must be a live handle; `op` a valid C string; `params_json` a valid
/// C string or null; `out_json` writable or null.
#[no_mangle]
pub unsafe extern "C" fn tea_call(
    rt: *const TeaRuntime,
    op: *const c_char,
    params_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TeaStatus {
    if !out_json.is_null() {
        *out_json = ptr::null_mut();
    }
    let (Some(rt), Some(op)) = (rt.as_ref(), text(op)) else {
        return TeaStatus::InvalidArgument;
    };
    let params = if params_json.is_null() {
        None
    } else {
        match text(params_json) {
            Some(p) => Some(p),
            None => return TeaStatus::InvalidArgument,
        }
    };
    guard(TeaStatus::Panic, || {
        let result = (|| {
            let params = match params.map(Value::from_canonical).transpose()? {
                None => Map::new(),
                Some(Value::Map(m)) => m,
                Some(_) => return Err(Error::protocol("params must be a mapping")),
            };
            rt.dispatcher.call(op, &params)
        })();
        let (status, body) = match result {
            Ok(v) => (TeaStatus::Ok, canonical_string(&v)),
            Err(e) => (e.kind.into(), canonical_string(&WireError::from(e))),
        };
        if !out_json.is_null() {
            *out_json = owned(body.unwrap_or_default());
        }
        status
    })
}

/// Writes the whole state under `dir`.
///
/// # Safety
/// `rt` must be a live handle; `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn tea_save(rt: *const TeaRuntime, dir: *const c_char) -> TeaStatus {
    let (Some(rt), Some(dir)) = (rt.as_ref(), text(dir)) else {
        return TeaStatus::InvalidArgument;
    };
    guard(TeaStatus::Panic, || status_of(rt.dispatcher.tea().save_dir(Path::new(dir))))
}

/// Replaces the state with what `dir` holds. Nothing changes on failure.
///
/// # Safety
/// `rt` must be a live handle; `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn tea_load(rt: *const TeaRuntime, dir: *const c_char) -> TeaStatus {
    let (Some(rt), Some(dir)) = (rt.as_ref(), text(dir)) else {
        return TeaStatus::InvalidArgument;
    };
    guard(TeaStatus::Panic, || status_of(rt.dispatcher.tea().load_dir(Path::new(dir))))
}

/// Static name of a status code, e.g. "NotFound". Never null.
#[no_mangle]
pub extern "C" fn tea_status_name(status: TeaStatus) -> *const c_char {
    let s: &'static CStr = match status {
        TeaStatus::Ok => c"Ok",
        TeaStatus::NotFound => c"NotFound",
        TeaStatus::NameConflict => c"NameConflict",
        TeaStatus::VersionNotFound => c"VersionNotFound",
        TeaStatus::ValidationFailed => c"ValidationFailed",
        TeaStatus::ActionNotFound => c"ActionNotFound",
        TeaStatus::BackendFailure => c"BackendFailure",
        TeaStatus::ProtocolError => c"ProtocolError",
        TeaStatus::LifecycleViolation => c"LifecycleViolation",
        TeaStatus::EvolutionRejected => c"EvolutionRejected",
        TeaStatus::PersistenceError => c"PersistenceError",
        TeaStatus::InvalidArgument => c"InvalidArgument",
        TeaStatus::Panic => c"Panic",
    };
    s.as_ptr()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tea_version() -> *const c_char {
    const V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tea_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
