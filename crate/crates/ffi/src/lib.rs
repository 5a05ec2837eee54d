//! C ABI for the hard-core spatial birth-death simulator.
//!
//! Conventions: every function returns an `HsbdStatus`; output parameters are
//! written only on `Ok`. Handles are opaque pointers owned by the caller and
//! released with the matching `_free`. On any non-Ok status a human-readable
//! message is available from `hsbd_last_error()` until the next call on the
//! same thread. All entry points catch panics.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hardcore_sbd::analysis::{packing_fraction, theorem_condition};
use hardcore_sbd::cftp::sample_stationary;
use hardcore_sbd::dynamics::{generate_initial, simulate};
use hardcore_sbd::{Boundary, Configuration, Error, InitKind, SimParams};

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HsbdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ContractViolation = 3,
    InsufficientData = 4,
    IoError = 5,
    Panic = 6,
}

/// Model parameters. `boundary_torus` nonzero selects periodic boundaries.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HsbdParams {
    pub d: u32,
    pub side: f64,
    pub rho: f64,
    pub lambda: f64,
    pub seed: u64,
    pub slab_len: f64,
    pub boundary_torus: u8,
}

/// Opaque point configuration handle.
pub struct HsbdConfiguration {
    inner: Configuration,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: HsbdStatus, msg: &str) -> HsbdStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> HsbdStatus {
    match e {
        Error::Config(_) | Error::InvalidParams(_) => HsbdStatus::InvalidArgument,
        Error::InsufficientData(_) => HsbdStatus::InsufficientData,
        Error::Io(_) => HsbdStatus::IoError,
        _ => HsbdStatus::ContractViolation,
    }
}

fn guarded(body: impl FnOnce() -> HsbdStatus) -> HsbdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => fail(HsbdStatus::Panic, "internal panic"),
    }
}

unsafe fn to_params(p: *const HsbdParams) -> Result<SimParams, HsbdStatus> {
    let p = p.as_ref().ok_or_else(|| fail(HsbdStatus::NullPointer, "params is null"))?;
    let params = SimParams {
        d: p.d as usize,
        side: p.side,
        rho: p.rho,
        lambda: p.lambda,
        seed: p.seed,
        slab_len: p.slab_len,
        boundary: if p.boundary_torus != 0 { Boundary::Torus } else { Boundary::Free },
    };
    params.validate().map_err(|e| fail(status_of(&e), &e.to_string()))?;
    Ok(params)
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next API call on the same thread.
#[no_mangle]
pub extern "C" fn hsbd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsbd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a configuration. `init_kind`: 0 empty, 1 Matern I, 2 Matern II,
/// 3 saturated RSA; `lambda_prop` is the proposal intensity for kinds 1-3.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hsbd_config_new(
    params: *const HsbdParams,
    init_kind: u32,
    lambda_prop: f64,
    out: *mut *mut HsbdConfiguration,
) -> HsbdStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HsbdStatus::NullPointer, "out is null");
        }
        let p = match to_params(params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let kind = match init_kind {
            0 => InitKind::Empty,
            1 => InitKind::Matern1,
            2 => InitKind::Matern2,
            3 => InitKind::SaturatedRsa,
            k => return fail(HsbdStatus::InvalidArgument, &format!("unknown init kind {k}")),
        };
        match generate_initial(kind, lambda_prop, &p) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(HsbdConfiguration { inner: c }));
                HsbdStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Release a configuration handle. Null is a no-op.
///
/// # Safety
/// `config` must be a pointer from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hsbd_config_free(config: *mut HsbdConfiguration) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Number of live points, or -1 if the handle is null.
///
/// # Safety
/// `config` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn hsbd_config_len(config: *const HsbdConfiguration) -> i64 {
    match config.as_ref() {
        Some(c) => c.inner.len() as i64,
        None => -1,
    }
}

/// Fetch point `index` (iteration order is stable): coordinates into
/// `x_out[3]` (unused axes zero) and the birth time into `birth_out`.
///
/// # Safety
/// `config` must be a valid handle; `x_out` must have room for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn hsbd_config_point(
    config: *const HsbdConfiguration,
    index: usize,
    x_out: *mut f64,
    birth_out: *mut f64,
) -> HsbdStatus {
    guarded(|| {
        let Some(c) = config.as_ref() else {
            return fail(HsbdStatus::NullPointer, "config is null");
        };
        if x_out.is_null() || birth_out.is_null() {
            return fail(HsbdStatus::NullPointer, "output pointer is null");
        }
        let Some((_, rec)) = c.inner.iter().nth(index) else {
            return fail(
                HsbdStatus::InvalidArgument,
                &format!("index {index} out of range ({} points)", c.inner.len()),
            );
        };
        for k in 0..3 {
            *x_out.add(k) = rec.x[k];
        }
        *birth_out = rec.birth;
        HsbdStatus::Ok
    })
}

/// Advance the configuration through the dynamics over [t0, t1).
///
/// # Safety
/// `params` and `config` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hsbd_simulate(
    params: *const HsbdParams,
    config: *mut HsbdConfiguration,
    t0: f64,
    t1: f64,
) -> HsbdStatus {
    guarded(|| {
        let p = match to_params(params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let Some(c) = config.as_mut() else {
            return fail(HsbdStatus::NullPointer, "config is null");
        };
        match simulate(&p, c.inner.clone(), t0, t1, false) {
            Ok((_, end)) => {
                c.inner = end;
                HsbdStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Draw a coupling-from-the-past sample. On Ok, `out_config` owns the time-0
/// configuration; `out_coalesced` is 0 when the budget was exhausted, in
/// which case the sample is only a long-run approximation and
/// `out_coincidence` is infinity.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsbd_cftp_sample(
    params: *const HsbdParams,
    t_init: f64,
    t_max: f64,
    out_config: *mut *mut HsbdConfiguration,
    out_horizon: *mut f64,
    out_coalesced: *mut u8,
    out_coincidence: *mut f64,
) -> HsbdStatus {
    guarded(|| {
        if out_config.is_null() || out_horizon.is_null() || out_coalesced.is_null()
            || out_coincidence.is_null()
        {
            return fail(HsbdStatus::NullPointer, "output pointer is null");
        }
        let p = match to_params(params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match sample_stationary(&p, t_init, t_max) {
            Ok(o) => {
                *out_horizon = o.result.horizon_used;
                *out_coalesced = o.result.coalesced as u8;
                *out_coincidence = o.result.coincidence_time;
                *out_config = Box::into_raw(Box::new(HsbdConfiguration { inner: o.sample }));
                HsbdStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Evaluate the decay condition; writes the expression value and whether it
/// is negative (condition satisfied).
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsbd_theorem_condition(
    rho: f64,
    d: u32,
    lambda: f64,
    out_value: *mut f64,
    out_satisfied: *mut u8,
) -> HsbdStatus {
    guarded(|| {
        if out_value.is_null() || out_satisfied.is_null() {
            return fail(HsbdStatus::NullPointer, "output pointer is null");
        }
        match theorem_condition(rho, d as usize, lambda) {
            Ok(c) => {
                *out_value = c.theorem_value;
                *out_satisfied = c.satisfied_theorem as u8;
                HsbdStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Fraction of the window covered by radius-1/2 balls around the points.
///
/// # Safety
/// `config` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hsbd_packing_fraction(
    config: *const HsbdConfiguration,
    out: *mut f64,
) -> HsbdStatus {
    guarded(|| {
        let Some(c) = config.as_ref() else {
            return fail(HsbdStatus::NullPointer, "config is null");
        };
        if out.is_null() {
            return fail(HsbdStatus::NullPointer, "out is null");
        }
        *out = packing_fraction(&c.inner);
        HsbdStatus::Ok
    })
}
