//! C ABI over the `spectrolev` detector.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`SpectrolevStatus`]; on failure a description is available from
//! [`spectrolev_last_error`] on the same thread until the next failing call.
//! Strings returned by the library are released with [`spectrolev_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spectrolev::detector::{detect, DetectionReport};
use spectrolev::hermite::{gabor_hermite, hermite_max_abs};
use spectrolev::spectrogram::{evaluate_field, max_magnitude};
use spectrolev::{Error, Grid, ModeIndex, ModeSpec, PlanePoint, SpectrogramField};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrolevStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    InvalidModel = 3,
    Infeasible = 4,
    EmptyLevelSet = 5,
    Quadrature = 6,
    Parse = 7,
    Io = 8,
    OutOfRange = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// A spectrogram evaluated on a grid.
pub struct SpectrolevField {
    inner: SpectrogramField,
}

/// Output of the annulus detector.
pub struct SpectrolevReport {
    inner: DetectionReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpectrolevStatus {
    match e {
        Error::Domain(_) => SpectrolevStatus::Domain,
        Error::InvalidModel(_) => SpectrolevStatus::InvalidModel,
        Error::Quadrature { .. } => SpectrolevStatus::Quadrature,
        Error::Infeasible(_) => SpectrolevStatus::Infeasible,
        Error::EmptyLevelSet => SpectrolevStatus::EmptyLevelSet,
        Error::Parse(_) => SpectrolevStatus::Parse,
        Error::Io(_) => SpectrolevStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SpectrolevStatus, String)>) -> SpectrolevStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpectrolevStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpectrolevStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SpectrolevStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (SpectrolevStatus, String) {
    (SpectrolevStatus::NullPointer, format!("`{name}` is null"))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn spectrolev_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `V_g h_k(u, v)` as real and imaginary parts.
///
/// # Safety
/// `re` and `im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_gabor_hermite(
    k: u32,
    u: f64,
    v: f64,
    re: *mut f64,
    im: *mut f64,
) -> SpectrolevStatus {
    guard(|| {
        if re.is_null() {
            return Err(null("re"));
        }
        if im.is_null() {
            return Err(null("im"));
        }
        let z = gabor_hermite(ModeIndex(k), PlanePoint::new(u, v));
        *re = z.re;
        *im = z.im;
        Ok(())
    })
}

/// `max |V_g h_k| = ∏_{t=1}^k √(k/(e t))`.
#[no_mangle]
pub extern "C" fn spectrolev_hermite_max_abs(k: u32) -> f64 {
    hermite_max_abs(ModeIndex(k))
}

/// Evaluates `Σ λ_m V_g h_{k_m} + σ F[ξ]` on the `(2n+1)²` grid over
/// `[-half_width, half_width]²`. `ks` and `lambdas` hold `n_modes` entries
/// and may be null when `n_modes` is 0.
///
/// # Safety
/// The arrays must hold `n_modes` elements; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_field_new(
    half_width: f64,
    n: usize,
    ks: *const u32,
    lambdas: *const f64,
    n_modes: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut SpectrolevField,
) -> SpectrolevStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n_modes > 0 && (ks.is_null() || lambdas.is_null()) {
            return Err(null("ks/lambdas"));
        }
        let modes = if n_modes == 0 {
            Vec::new()
        } else {
            let ks = std::slice::from_raw_parts(ks, n_modes);
            let lambdas = std::slice::from_raw_parts(lambdas, n_modes);
            ks.iter()
                .zip(lambdas)
                .map(|(&k, &l)| (ModeIndex(k), l))
                .collect()
        };
        let grid = Grid::new(half_width, n).map_err(lib_err)?;
        let spec = ModeSpec::new(modes, sigma, seed).map_err(lib_err)?;
        let inner = evaluate_field(&spec, &grid).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SpectrolevField { inner }));
        Ok(())
    })
}

/// Releases a field. Null is ignored.
///
/// # Safety
/// `field` must come from [`spectrolev_field_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_field_free(field: *mut SpectrolevField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Points per grid axis, `2n + 1`; 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_field_side(field: *const SpectrolevField) -> usize {
    field.as_ref().map_or(0, |f| f.inner.grid().side())
}

/// Copies the `side²` magnitudes into `buf`, index `i * side + j` holding
/// the point `(u_i, v_j)`.
///
/// # Safety
/// `field` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_field_magnitudes(
    field: *const SpectrolevField,
    buf: *mut f64,
    len: usize,
) -> SpectrolevStatus {
    guard(|| {
        let field = field.as_ref().ok_or_else(|| null("field"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let mags = field.inner.magnitudes();
        if len < mags.len() {
            return Err((
                SpectrolevStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", mags.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, mags.len()).copy_from_slice(&mags);
        Ok(())
    })
}

/// Grid maximum `m_L` of the magnitude.
///
/// # Safety
/// `field` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_field_max(
    field: *const SpectrolevField,
    out: *mut f64,
) -> SpectrolevStatus {
    guard(|| {
        let field = field.as_ref().ok_or_else(|| null("field"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = max_magnitude(&field.inner).m_l;
        Ok(())
    })
}

/// Runs the detector on `field` with `slopes` lines through the origin.
///
/// # Safety
/// `field` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_detect(
    field: *const SpectrolevField,
    slopes: usize,
    out: *mut *mut SpectrolevReport,
) -> SpectrolevStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let field = field.as_ref().ok_or_else(|| null("field"))?;
        let inner = detect(&field.inner, slopes).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SpectrolevReport { inner }));
        Ok(())
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from [`spectrolev_detect`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_report_free(report: *mut SpectrolevReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of detected annuli; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_report_annulus_count(report: *const SpectrolevReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.annuli.len())
}

/// Radius `η` and floor estimate `⌊π η²⌋` of annulus `index`.
///
/// # Safety
/// `report` must be a live handle; `eta` and `k_floor` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_report_annulus(
    report: *const SpectrolevReport,
    index: usize,
    eta: *mut f64,
    k_floor: *mut u64,
) -> SpectrolevStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if eta.is_null() || k_floor.is_null() {
            return Err(null("eta/k_floor"));
        }
        let a = report.inner.annuli.get(index).ok_or_else(|| {
            (
                SpectrolevStatus::OutOfRange,
                format!(
                    "annulus {index} requested, {} detected",
                    report.inner.annuli.len()
                ),
            )
        })?;
        *eta = a.eta;
        *k_floor = a.k_floor;
        Ok(())
    })
}

/// The report as a JSON string, released with [`spectrolev_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_report_to_json(
    report: *const SpectrolevReport,
    out: *mut *mut c_char,
) -> SpectrolevStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let text = report.inner.to_json().to_string();
        *out = CString::new(text).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// mACC of estimated against true mode indices (both any order).
///
/// # Safety
/// `true_ks` must hold `n_true` and `est_ks` `n_est` elements (either may be
/// null when its length is 0); `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrolev_macc(
    true_ks: *const u64,
    n_true: usize,
    est_ks: *const u64,
    n_est: usize,
    out: *mut f64,
) -> SpectrolevStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let view = |p: *const u64, n: usize, name: &str| {
            if n == 0 {
                Ok(&[][..])
            } else if p.is_null() {
                Err(null(name))
            } else {
                Ok(std::slice::from_raw_parts(p, n))
            }
        };
        let t = view(true_ks, n_true, "true_ks")?;
        let e = view(est_ks, n_est, "est_ks")?;
        *out = spectrolev::harness::macc(t, e);
        Ok(())
    })
}
