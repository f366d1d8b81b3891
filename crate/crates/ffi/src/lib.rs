//! C ABI over the needlet library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or by an
//! operation and released with the matching `*_free`. Every fallible call
//! returns a [`NeedletStatus`]; on failure the message is available from
//! [`needlet_last_error`] on the same thread until the next failing call.
//! Panics are caught and reported as `NEEDLET_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use needlet::needlet::{analyze, synthesize, CoefficientPyramid, LpExponent, PyramidTag};
use needlet::sphere::SpherePoint;
use needlet::threshold::{build_partitions, denoise, theoretical_rate, EstimatorConfig};
use needlet::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeedletStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    LengthMismatch = 3,
    ResourceCap = 4,
    Format = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque frame handle.
pub struct NeedletSystem(needlet::needlet::NeedletSystem);

/// Opaque coefficient pyramid handle.
pub struct NeedletPyramid(CoefficientPyramid);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NeedletStatus {
    match e {
        Error::InvalidParameter { .. } | Error::EmptyInput(_) | Error::Embedding(_) => NeedletStatus::InvalidParameter,
        Error::LengthMismatch { .. } | Error::IndexOutOfRange { .. } => NeedletStatus::LengthMismatch,
        Error::ResourceCap { .. } => NeedletStatus::ResourceCap,
        Error::Format { .. } => NeedletStatus::Format,
        Error::Io(_) => NeedletStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NeedletStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NeedletStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            NeedletStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            NeedletStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), Fail> {
    if expected != found {
        return Err(Error::LengthMismatch { what, expected, found }.into());
    }
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn needlet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a frame with bandwidth `B > 1` and levels `0..=j_max`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn needlet_system_new(bandwidth: f64, j_max: usize, out: *mut *mut NeedletSystem) -> NeedletStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let sys = needlet::needlet::NeedletSystem::new(bandwidth, j_max)?;
        *out = Box::into_raw(Box::new(NeedletSystem(sys)));
        Ok(())
    })
}

/// Releases a frame. Null is ignored.
///
/// # Safety
/// `sys` must be null or a handle from [`needlet_system_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn needlet_system_free(sys: *mut NeedletSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of levels, `j_max + 1`; zero for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn needlet_system_levels(sys: *const NeedletSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.0.j_max() + 1)
}

/// Writes the per-level point counts N_j into `out[0..len]`, where `len`
/// must equal the number of levels.
///
/// # Safety
/// `sys` must be a live handle and `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn needlet_system_counts(sys: *const NeedletSystem, out: *mut usize, len: usize) -> NeedletStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        let counts = sys.0.counts();
        check_len("counts buffer", counts.len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(&counts);
        Ok(())
    })
}

/// Number of analysis grid points; zero for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn needlet_system_analysis_points(sys: *const NeedletSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.0.analysis_grid().count())
}

/// Writes colatitude and longitude of each analysis grid point.
///
/// # Safety
/// `sys` must be a live handle; `theta` and `phi` must each hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn needlet_system_analysis_grid(
    sys: *const NeedletSystem,
    theta: *mut f64,
    phi: *mut f64,
    len: usize,
) -> NeedletStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        let pts = &sys.0.analysis_grid().points;
        check_len("grid buffers", pts.len(), len)?;
        let theta = slice_mut(theta, len, "theta")?;
        let phi = slice_mut(phi, len, "phi")?;
        for (i, p) in pts.iter().enumerate() {
            theta[i] = p.theta();
            phi[i] = p.phi();
        }
        Ok(())
    })
}

/// Needlet coefficients of samples given on the analysis grid.
///
/// # Safety
/// `sys` must be a live handle, `samples` must hold `len` values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn needlet_analyze(
    sys: *const NeedletSystem,
    samples: *const f64,
    len: usize,
    out: *mut *mut NeedletPyramid,
) -> NeedletStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let pyr = analyze(&sys.0, slice(samples, len, "samples")?)?;
        *out = Box::into_raw(Box::new(NeedletPyramid(pyr)));
        Ok(())
    })
}

/// Evaluates the function of `pyr` at `len` points given by colatitude and
/// longitude in radians.
///
/// # Safety
/// Handles must be live; `theta`, `phi` and `out` must each hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn needlet_synthesize(
    sys: *const NeedletSystem,
    pyr: *const NeedletPyramid,
    theta: *const f64,
    phi: *const f64,
    len: usize,
    out: *mut f64,
) -> NeedletStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        let pyr = deref(pyr, "pyr")?;
        let theta = slice(theta, len, "theta")?;
        let phi = slice(phi, len, "phi")?;
        let targets = theta
            .iter()
            .zip(phi)
            .map(|(&t, &p)| SpherePoint::from_angles_wrapped(t, p))
            .collect::<needlet::Result<Vec<_>>>()?;
        let values = synthesize(&sys.0, &pyr.0, &targets)?;
        slice_mut(out, len, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Builds a pyramid from concatenated level data. `counts[j]` is the length
/// of level `j` and `data` holds the sum of all counts.
///
/// # Safety
/// `counts` must hold `levels` elements, `data` the sum of them, and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn needlet_pyramid_new(
    bandwidth: f64,
    counts: *const usize,
    levels: usize,
    data: *const f64,
    data_len: usize,
    out: *mut *mut NeedletPyramid,
) -> NeedletStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let counts = slice(counts, levels, "counts")?;
        let total: usize = counts.iter().sum();
        check_len("pyramid data", total, data_len)?;
        let data = slice(data, data_len, "data")?;
        if !(bandwidth.is_finite() && bandwidth > 1.0) {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: format!("{bandwidth} must exceed 1"),
            }
            .into());
        }
        let mut pyr = CoefficientPyramid::zeros(bandwidth, counts, PyramidTag::Noisy);
        let mut offset = 0;
        for lv in &mut pyr.levels {
            let len = lv.len();
            lv.copy_from_slice(&data[offset..offset + len]);
            offset += len;
        }
        *out = Box::into_raw(Box::new(NeedletPyramid(pyr)));
        Ok(())
    })
}

/// Releases a pyramid. Null is ignored.
///
/// # Safety
/// `pyr` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn needlet_pyramid_free(pyr: *mut NeedletPyramid) {
    if !pyr.is_null() {
        drop(Box::from_raw(pyr));
    }
}

/// Number of levels; zero for a null handle.
///
/// # Safety
/// `pyr` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn needlet_pyramid_levels(pyr: *const NeedletPyramid) -> usize {
    pyr.as_ref().map_or(0, |p| p.0.levels.len())
}

/// Length of level `j`, or zero when `j` is out of range.
///
/// # Safety
/// `pyr` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn needlet_pyramid_level_len(pyr: *const NeedletPyramid, j: usize) -> usize {
    pyr.as_ref().and_then(|p| p.0.levels.get(j)).map_or(0, Vec::len)
}

/// Copies level `j` into `out[0..len]`; `len` must equal the level length.
///
/// # Safety
/// `pyr` must be a live handle and `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn needlet_pyramid_level(
    pyr: *const NeedletPyramid,
    j: usize,
    out: *mut f64,
    len: usize,
) -> NeedletStatus {
    guard(|| {
        let pyr = deref(pyr, "pyr")?;
        let level = pyr.0.levels.get(j).ok_or(Error::IndexOutOfRange {
            what: "pyramid level",
            index: j,
            len: pyr.0.levels.len(),
        })?;
        check_len("level buffer", level.len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(level);
        Ok(())
    })
}

/// Block-thresholds `noisy` at sample size `n`. `kappa` may be `INFINITY`.
/// On success `*out` holds the estimate and, when `kept_blocks` is not
/// null, it receives the number of kept blocks.
///
/// # Safety
/// Handles must be live; `out` must be writable; `kept_blocks` may be null.
#[no_mangle]
pub unsafe extern "C" fn needlet_denoise(
    sys: *const NeedletSystem,
    noisy: *const NeedletPyramid,
    n: f64,
    kappa: f64,
    eta: f64,
    p_stat: u32,
    out: *mut *mut NeedletPyramid,
    kept_blocks: *mut usize,
) -> NeedletStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        let noisy = deref(noisy, "noisy")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        sys.0.check_pyramid(&noisy.0)?;
        let cfg = EstimatorConfig {
            kappa,
            eta,
            p_stat,
            n,
            bandwidth: sys.0.bandwidth(),
        }
        .validated()?;
        let parts = build_partitions(&sys.0, eta, cfg.j_n().min(sys.0.j_max()))?;
        let (est, stats) = denoise(&noisy.0, &parts, &cfg)?;
        if let Some(k) = kept_blocks.as_mut() {
            *k = stats.kept_blocks();
        }
        *out = Box::into_raw(Box::new(NeedletPyramid(est)));
        Ok(())
    })
}

/// Theoretical rate exponent α for smoothness `r`, integrability `pi` and
/// loss exponent `p` (`INFINITY` for the sup norm).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn needlet_rate(r: f64, pi: f64, p: f64, out: *mut f64) -> NeedletStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let p = if p == f64::INFINITY {
            LpExponent::Infinity
        } else {
            LpExponent::Finite(p)
        };
        *out = theoretical_rate(r, pi, p.validate()?)?;
        Ok(())
    })
}
