//! C ABI over the solarcast core: sun geometry, clear-sky irradiance, and
//! model inference behind an opaque handle.
//!
//! Conventions:
//! - Every fallible call returns a [`SolarcastStatus`]; outputs are written
//!   through pointers only on `SOLARCAST_STATUS_OK`.
//! - On failure, a thread-local message is retrievable with
//!   [`solarcast_last_error_message`].
//! - Instants are Unix seconds (UTC).
//! - `solarcast_model_load` allocates; release with `solarcast_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use chrono::DateTime;

use solarcast::bridge::apply_model;
use solarcast::dataset::{FeatureStats, FeatureVector, FEATURE_COUNT};
use solarcast::nn::{load_model, MLPModel};
use solarcast::solar;
use solarcast::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolarcastStatus {
    Ok = 0,
    /// Input rejected by a range, arity, or consistency check.
    InvalidArgument = 1,
    IoError = 2,
    /// File exists but is not a recognized solarcast format/version.
    FormatError = 3,
    InternalError = 4,
}

/// Sun position for one location and instant, angles in degrees.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SolarcastSunPosition {
    pub altitude_deg: f64,
    pub azimuth_deg: f64,
    pub declination_deg: f64,
    pub hour_angle_deg: f64,
}

/// Opaque handle to a loaded model plus its stored feature statistics.
pub struct SolarcastModel {
    model: MLPModel,
    stats: Option<FeatureStats>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn status_of(error: &Error) -> SolarcastStatus {
    match error {
        Error::Validation(_) | Error::MissingField(_) | Error::Parse { .. } | Error::Conflict { .. } => {
            SolarcastStatus::InvalidArgument
        }
        Error::Io { .. } => SolarcastStatus::IoError,
        Error::Format(_) => SolarcastStatus::FormatError,
        Error::Internal(_) => SolarcastStatus::InternalError,
    }
}

fn fail(error: &Error) -> SolarcastStatus {
    set_last_error(&error.to_string());
    status_of(error)
}

fn fail_invalid(message: &str) -> SolarcastStatus {
    set_last_error(message);
    SolarcastStatus::InvalidArgument
}

/// Runs `body` with panics converted to `SOLARCAST_STATUS_INTERNAL_ERROR`
/// so unwinding never crosses the FFI boundary.
fn guarded(body: impl FnOnce() -> SolarcastStatus) -> SolarcastStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            SolarcastStatus::InternalError
        }
    }
}

fn instant_from_unix(unix_seconds: i64) -> Result<chrono::DateTime<chrono::Utc>, SolarcastStatus> {
    DateTime::from_timestamp(unix_seconds, 0)
        .ok_or_else(|| fail_invalid(&format!("unix_seconds {unix_seconds} out of range")))
}

/// Number of features the model contract expects (and their order's arity).
#[no_mangle]
pub extern "C" fn solarcast_feature_count() -> usize {
    FEATURE_COUNT
}

/// Copies the last error message for this thread into `buf` (always
/// NUL-terminated when `len > 0`). Returns the full message length
/// including the NUL, or 0 when there is no pending error.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes, or be NULL with
/// `len == 0` to query the required size.
#[no_mangle]
pub unsafe extern "C" fn solarcast_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(message) = slot.as_ref() else {
            return 0;
        };
        let bytes = message.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // Guarantee termination even on truncation.
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Sun altitude/azimuth at `unix_seconds` (UTC) for the given coordinates.
///
/// # Safety
/// `out` must be a valid pointer to a [`SolarcastSunPosition`].
#[no_mangle]
pub unsafe extern "C" fn solarcast_sun_position(
    latitude_deg: f64,
    longitude_deg: f64,
    unix_seconds: i64,
    out: *mut SolarcastSunPosition,
) -> SolarcastStatus {
    guarded(|| {
        if out.is_null() {
            return fail_invalid("out pointer is NULL");
        }
        let instant = match instant_from_unix(unix_seconds) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let loc = match solar::GeoLocation::new(latitude_deg, longitude_deg) {
            Ok(l) => l,
            Err(e) => return fail(&e),
        };
        match solar::sun_position(loc, instant) {
            Ok(pos) => {
                *out = SolarcastSunPosition {
                    altitude_deg: pos.altitude_deg,
                    azimuth_deg: pos.azimuth_deg,
                    declination_deg: pos.declination_deg,
                    hour_angle_deg: pos.hour_angle_deg,
                };
                clear_last_error();
                SolarcastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Instant of maximum solar altitude during the UTC day containing
/// `unix_seconds`, written as Unix seconds.
///
/// # Safety
/// `out_unix_seconds` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn solarcast_solar_noon(
    latitude_deg: f64,
    longitude_deg: f64,
    unix_seconds: i64,
    out_unix_seconds: *mut i64,
) -> SolarcastStatus {
    guarded(|| {
        if out_unix_seconds.is_null() {
            return fail_invalid("out pointer is NULL");
        }
        let instant = match instant_from_unix(unix_seconds) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let loc = match solar::GeoLocation::new(latitude_deg, longitude_deg) {
            Ok(l) => l,
            Err(e) => return fail(&e),
        };
        match solar::solar_noon(loc, instant.date_naive()) {
            Ok(noon) => {
                *out_unix_seconds = noon.timestamp();
                clear_last_error();
                SolarcastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Current solar altitude over the same day's solar-noon altitude,
/// clamped to [0, 1].
///
/// # Safety
/// `out_ratio` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn solarcast_solar_altitude_ratio(
    latitude_deg: f64,
    longitude_deg: f64,
    unix_seconds: i64,
    out_ratio: *mut f64,
) -> SolarcastStatus {
    guarded(|| {
        if out_ratio.is_null() {
            return fail_invalid("out pointer is NULL");
        }
        let instant = match instant_from_unix(unix_seconds) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let loc = match solar::GeoLocation::new(latitude_deg, longitude_deg) {
            Ok(l) => l,
            Err(e) => return fail(&e),
        };
        match solar::solar_altitude_ratio(loc, instant) {
            Ok(ratio) => {
                *out_ratio = ratio.value();
                clear_last_error();
                SolarcastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Clear-sky surface irradiance (W/m²) for a solar altitude in degrees;
/// zero at and below the horizon or for non-finite input.
#[no_mangle]
pub extern "C" fn solarcast_potential_irradiance(altitude_deg: f64) -> f64 {
    if !altitude_deg.is_finite() {
        return 0.0;
    }
    let pos = solar::SunPosition {
        altitude_deg: altitude_deg.clamp(-90.0, 90.0),
        azimuth_deg: 0.0,
        declination_deg: 0.0,
        hour_angle_deg: 0.0,
    };
    solar::potential_irradiance(&pos)
}

/// Measured over potential irradiance, capped at 1.5; zero when the
/// potential is zero.
///
/// # Safety
/// `out_index` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn solarcast_clear_sky_index(
    measured_wm2: f64,
    potential_wm2: f64,
    out_index: *mut f64,
) -> SolarcastStatus {
    guarded(|| {
        if out_index.is_null() {
            return fail_invalid("out pointer is NULL");
        }
        match solar::clear_sky_index(measured_wm2, potential_wm2) {
            Ok(index) => {
                *out_index = index;
                clear_last_error();
                SolarcastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Loads a model file (with any stored feature statistics) and hands back
/// an owned opaque handle.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out_model` must be a
/// valid pointer. The returned handle must be released exactly once with
/// [`solarcast_model_free`].
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_load(
    path: *const c_char,
    out_model: *mut *mut SolarcastModel,
) -> SolarcastStatus {
    guarded(|| {
        if path.is_null() || out_model.is_null() {
            return fail_invalid("path or out pointer is NULL");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => return fail_invalid("path is not valid UTF-8"),
        };
        match load_model(Path::new(path)) {
            Ok((model, stats)) => {
                let handle = Box::new(SolarcastModel { model, stats });
                *out_model = Box::into_raw(handle);
                clear_last_error();
                SolarcastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a handle from [`solarcast_model_load`]. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_free(model: *mut SolarcastModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts surface solar radiation (W/m², floored at zero) from
/// `feature_count` physical-unit features in the documented order.
/// Stored standardization is applied automatically.
///
/// # Safety
/// `model` must be a live handle; `features` must point to
/// `feature_count` doubles; `out_wm2` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_predict(
    model: *const SolarcastModel,
    features: *const f64,
    feature_count: usize,
    out_wm2: *mut f64,
) -> SolarcastStatus {
    guarded(|| {
        if model.is_null() || features.is_null() || out_wm2.is_null() {
            return fail_invalid("model, features, or out pointer is NULL");
        }
        if feature_count != FEATURE_COUNT {
            return fail_invalid(&format!(
                "feature_count {feature_count} does not match the contract ({FEATURE_COUNT})"
            ));
        }
        let handle = &*model;
        let raw = std::slice::from_raw_parts(features, feature_count);
        let mut values = [0.0; FEATURE_COUNT];
        values.copy_from_slice(raw);
        let fv = match FeatureVector::new(values) {
            Ok(fv) => fv,
            Err(e) => return fail(&e),
        };
        match apply_model(&handle.model, handle.stats.as_ref(), &fv) {
            Ok(prediction) => {
                *out_wm2 = prediction;
                clear_last_error();
                SolarcastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
