//! C ABI for the reconstruction library.
//!
//! Handles are opaque pointers owned by Rust; every `emr_*_new`/`_load`
//! style constructor pairs with an `emr_*_free`. Functions return an
//! [`EmrStatus`] code; the most recent failure message is retrievable per
//! thread through [`emr_last_error`]. All functions catch panics and turn
//! them into `EMR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use emrecon::cases::{self, CaseOutcome};
use emrecon::config::{CaseId, RunConfig};
use emrecon::error::Error;
use emrecon::fields::ObservationTrace;

/// Result code of every C-ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Solver = 5,
    Verify = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Which reconstructed field to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmrField {
    EpsRaw = 0,
    MuRaw = 1,
    EpsMasked = 2,
    MuMasked = 3,
}

/// Opaque run configuration.
pub struct EmrConfig {
    inner: RunConfig,
}

/// Opaque observation trace.
pub struct EmrTrace {
    inner: ObservationTrace,
}

/// Opaque reconstruction outcome.
pub struct EmrResult {
    outcome: CaseOutcome,
    dims: [usize; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn status_of(err: &Error) -> EmrStatus {
    match err.category() {
        "config" => EmrStatus::Config,
        "io" => EmrStatus::Io,
        "solver" => EmrStatus::Solver,
        "verify" => EmrStatus::Verify,
        _ => EmrStatus::Config,
    }
}

fn fail(err: Error) -> EmrStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guard(f: impl FnOnce() -> EmrStatus) -> EmrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic inside the library".into());
            EmrStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, EmrStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(EmrStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        EmrStatus::InvalidUtf8
    })
}

/// Copy the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn emr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len() - 1
    })
}

/// Fresh configuration with the built-in defaults.
#[no_mangle]
pub extern "C" fn emr_config_new() -> *mut EmrConfig {
    Box::into_raw(Box::new(EmrConfig {
        inner: RunConfig::default(),
    }))
}

/// Parse and validate a TOML config file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn emr_config_load(
    path: *const c_char,
    out: *mut *mut EmrConfig,
) -> EmrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output slot".into());
            return EmrStatus::NullArgument;
        }
        let path = match unsafe { cstr_arg(path) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match RunConfig::load(Path::new(path)) {
            Ok(cfg) => {
                unsafe { *out = Box::into_raw(Box::new(EmrConfig { inner: cfg })) };
                EmrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Set one configuration key from its TOML value representation, e.g.
/// `emr_config_set(cfg, "omega", "30.0")` or
/// `emr_config_set(cfg, "outer", "[[-3.4,3.4],[-0.8,0.8],[-0.4,0.4]]")`.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` valid strings.
#[no_mangle]
pub unsafe extern "C" fn emr_config_set(
    cfg: *mut EmrConfig,
    key: *const c_char,
    value: *const c_char,
) -> EmrStatus {
    guard(|| {
        let Some(cfg) = (unsafe { cfg.as_mut() }) else {
            set_error("null config handle".into());
            return EmrStatus::NullArgument;
        };
        let (key, value) = match (unsafe { cstr_arg(key) }, unsafe { cstr_arg(value) }) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let current = cfg.inner.to_toml();
        let mut table: toml::Table = match current.parse() {
            Ok(t) => t,
            Err(e) => {
                set_error(format!("internal config state unparsable: {e}"));
                return EmrStatus::Panic;
            }
        };
        let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").unwrap(),
            Err(e) => {
                set_error(format!("value for `{key}` is not valid TOML: {e}"));
                return EmrStatus::Config;
            }
        };
        table.insert(key.to_string(), parsed);
        match toml::to_string(&table)
            .map_err(|e| Error::Parse(e.to_string()))
            .and_then(|text| RunConfig::parse_unvalidated(&text))
        {
            Ok(new_cfg) => {
                cfg.inner = new_cfg;
                EmrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn emr_config_free(cfg: *mut EmrConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Generate the synthetic observation trace for the configured phantom;
/// `noisy` selects the noise-bearing variant.
///
/// # Safety
/// `cfg` live handle, `out` valid slot.
#[no_mangle]
pub unsafe extern "C" fn emr_generate_data(
    cfg: *const EmrConfig,
    noisy: bool,
    out: *mut *mut EmrTrace,
) -> EmrStatus {
    guard(|| {
        let (Some(cfg), false) = (unsafe { cfg.as_ref() }, out.is_null()) else {
            set_error("null argument".into());
            return EmrStatus::NullArgument;
        };
        if let Err(e) = cfg.inner.validate() {
            return fail(e);
        }
        match cases::generate_data(&cfg.inner) {
            Ok((clean, with_noise)) => {
                let trace = if noisy { with_noise } else { clean };
                unsafe { *out = Box::into_raw(Box::new(EmrTrace { inner: trace })) };
                EmrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Write a trace in the CSV layout.
///
/// # Safety
/// `trace` live handle, `path` valid string.
#[no_mangle]
pub unsafe extern "C" fn emr_trace_write_csv(
    trace: *const EmrTrace,
    path: *const c_char,
) -> EmrStatus {
    guard(|| {
        let Some(trace) = (unsafe { trace.as_ref() }) else {
            set_error("null trace handle".into());
            return EmrStatus::NullArgument;
        };
        let path = match unsafe { cstr_arg(path) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match emrecon::io::write_trace_csv(&trace.inner, Path::new(path)) {
            Ok(()) => EmrStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Load a trace from the CSV layout.
///
/// # Safety
/// `path` valid string, `out` valid slot.
#[no_mangle]
pub unsafe extern "C" fn emr_trace_load_csv(
    path: *const c_char,
    out: *mut *mut EmrTrace,
) -> EmrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output slot".into());
            return EmrStatus::NullArgument;
        }
        let path = match unsafe { cstr_arg(path) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match emrecon::io::read_trace_csv(Path::new(path)) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(EmrTrace { inner: t })) };
                EmrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `trace` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn emr_trace_free(trace: *mut EmrTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Run the full reconstruction. With a null `trace` the observation data
/// is generated from the configured phantom and seed.
///
/// # Safety
/// `cfg` live handle, `trace` null or live, `out` valid slot.
#[no_mangle]
pub unsafe extern "C" fn emr_reconstruct(
    cfg: *const EmrConfig,
    trace: *const EmrTrace,
    out: *mut *mut EmrResult,
) -> EmrStatus {
    guard(|| {
        let (Some(cfg), false) = (unsafe { cfg.as_ref() }, out.is_null()) else {
            set_error("null argument".into());
            return EmrStatus::NullArgument;
        };
        if let Err(e) = cfg.inner.validate() {
            return fail(e);
        }
        let observed = match unsafe { trace.as_ref() } {
            Some(t) => t.inner.clone(),
            None => match cases::generate_data(&cfg.inner) {
                Ok((_, noisy)) => noisy,
                Err(e) => return fail(e),
            },
        };
        let dims = match cfg.inner.assemble() {
            Ok(asm) => asm.grid.n,
            Err(e) => return fail(e),
        };
        match cases::run_reconstruction(&cfg.inner, observed) {
            Ok(outcome) => {
                unsafe { *out = Box::into_raw(Box::new(EmrResult { outcome, dims })) };
                EmrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of conjugate-gradient iterations recorded.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn emr_result_iterations(res: *const EmrResult) -> usize {
    unsafe { res.as_ref() }
        .map(|r| r.outcome.result.iterations.len())
        .unwrap_or(0)
}

/// Final objective value.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn emr_result_objective(res: *const EmrResult) -> f64 {
    unsafe { res.as_ref() }
        .and_then(|r| r.outcome.result.objective_history.last().copied())
        .unwrap_or(f64::NAN)
}

/// Max of the thresholded permittivity image.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn emr_result_max_eps(res: *const EmrResult) -> f64 {
    unsafe { res.as_ref() }
        .map(|r| r.outcome.max_eps_masked)
        .unwrap_or(f64::NAN)
}

/// Max of the thresholded permeability image.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn emr_result_max_mu(res: *const EmrResult) -> f64 {
    unsafe { res.as_ref() }
        .map(|r| r.outcome.max_mu_masked)
        .unwrap_or(f64::NAN)
}

/// Grid node counts of the reconstruction.
///
/// # Safety
/// `res` live handle; `dims` points at three writable usize slots.
#[no_mangle]
pub unsafe extern "C" fn emr_result_dims(res: *const EmrResult, dims: *mut usize) -> EmrStatus {
    guard(|| {
        let (Some(r), false) = (unsafe { res.as_ref() }, dims.is_null()) else {
            set_error("null argument".into());
            return EmrStatus::NullArgument;
        };
        for (i, d) in r.dims.iter().enumerate() {
            unsafe { *dims.add(i) = *d };
        }
        EmrStatus::Ok
    })
}

/// Copy one nodal field (length = product of the dims) into `buf`.
///
/// # Safety
/// `res` live handle; `buf` points at `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn emr_result_field(
    res: *const EmrResult,
    which: EmrField,
    buf: *mut f64,
    len: usize,
) -> EmrStatus {
    guard(|| {
        let (Some(r), false) = (unsafe { res.as_ref() }, buf.is_null()) else {
            set_error("null argument".into());
            return EmrStatus::NullArgument;
        };
        let data = match which {
            EmrField::EpsRaw => &r.outcome.eps_raw.data,
            EmrField::MuRaw => &r.outcome.mu_raw.data,
            EmrField::EpsMasked => &r.outcome.eps_masked.data,
            EmrField::MuMasked => &r.outcome.mu_masked.data,
        };
        if len < data.len() {
            set_error(format!("buffer of {len} for a field of {}", data.len()));
            return EmrStatus::OutOfRange;
        }
        unsafe { std::ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len()) };
        EmrStatus::Ok
    })
}

/// # Safety
/// `res` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn emr_result_free(res: *mut EmrResult) {
    if !res.is_null() {
        drop(unsafe { Box::from_raw(res) });
    }
}

/// Discrete adjoint identity check; writes the true and the deliberately
/// sign-flipped discrepancies.
///
/// # Safety
/// Output pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn emr_adjoint_check(
    seed: u64,
    discrepancy: *mut f64,
    mutated_discrepancy: *mut f64,
) -> EmrStatus {
    guard(|| match cases::adjoint_check(seed) {
        Ok(out) => {
            if !discrepancy.is_null() {
                unsafe { *discrepancy = out.discrepancy };
            }
            if !mutated_discrepancy.is_null() {
                unsafe { *mutated_discrepancy = out.mutated_discrepancy };
            }
            EmrStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Run one standard case (`"i"`, `"ii"`, `"iii"`, `"iv"`) end to end,
/// writing every artifact under `workdir`.
///
/// # Safety
/// `cfg` live handle; `case` and `workdir` valid strings.
#[no_mangle]
pub unsafe extern "C" fn emr_run_case(
    cfg: *const EmrConfig,
    case: *const c_char,
    workdir: *const c_char,
) -> EmrStatus {
    guard(|| {
        let Some(cfg) = (unsafe { cfg.as_ref() }) else {
            set_error("null config handle".into());
            return EmrStatus::NullArgument;
        };
        let (case, workdir) = match (unsafe { cstr_arg(case) }, unsafe { cstr_arg(workdir) }) {
            (Ok(c), Ok(w)) => (c, w),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let Some(case) = CaseId::parse(case) else {
            set_error(format!("unknown case `{case}`"));
            return EmrStatus::Config;
        };
        if let Err(e) = cfg.inner.validate() {
            return fail(e);
        }
        match cases::run_case(case, &cfg.inner, &PathBuf::from(workdir)) {
            Ok(_) => EmrStatus::Ok,
            Err(e) => fail(e),
        }
    })
}
