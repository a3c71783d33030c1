//! C ABI over the quality predictor and the correlation metrics.
//!
//! Every function returns a [`CoaeStatus`]. On failure the message is kept
//! per thread and can be read with [`coae_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use coae::checkpoint::Checkpoint;
use coae::eval::{plcc, srcc};
use coae::image::{load_image, Image};
use coae::visor::Predictor;
use coae::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoaeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Image = 4,
    Format = 5,
    Checkpoint = 6,
    Panic = 7,
}

/// Opaque predictor handle.
pub struct CoaePredictor {
    inner: Predictor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> CoaeStatus {
    match e {
        Error::InvalidArgument(_) => CoaeStatus::InvalidArgument,
        Error::Io { .. } => CoaeStatus::Io,
        Error::Image { .. } => CoaeStatus::Image,
        Error::Format { .. } => CoaeStatus::Format,
        Error::Checkpoint(_) => CoaeStatus::Checkpoint,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CoaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CoaeStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CoaeStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CoaeStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::arg(format!("{what} is not valid UTF-8"))))?;
    Ok(Some(PathBuf::from(s)))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Loads a predictor from checkpoint files. `cae_path` or `dae_path` may be
/// null when the VISOR head does not use that encoder.
///
/// # Safety
/// Paths must be null or NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_predictor_load(
    cae_path: *const c_char,
    dae_path: *const c_char,
    visor_path: *const c_char,
    out: *mut *mut CoaePredictor,
) -> CoaeStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        let visor = path_arg(visor_path, "visor_path")?.ok_or(Failure::Null("visor_path"))?;
        let cae = path_arg(cae_path, "cae_path")?.map(Checkpoint::load).transpose()?;
        let dae = path_arg(dae_path, "dae_path")?.map(Checkpoint::load).transpose()?;
        let inner = Predictor::from_checkpoints(cae.as_ref(), dae.as_ref(), &Checkpoint::load(visor)?)?;
        *out = Box::into_raw(Box::new(CoaePredictor { inner }));
        Ok(())
    })
}

/// Releases a handle from [`coae_predictor_load`]. Null is a no-op.
///
/// # Safety
/// `p` must come from `coae_predictor_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coae_predictor_free(p: *mut CoaePredictor) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Scores interleaved RGB floats in `[0, 1]`, row-major, `width * height * 3`
/// values. The score is in normalized MOS units; see
/// [`coae_predictor_mos_range`] to map it back.
///
/// # Safety
/// `rgb` must point to `width * height * 3` floats; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_predict_rgb(
    p: *mut CoaePredictor,
    rgb: *const f32,
    width: usize,
    height: usize,
    score: *mut f64,
) -> CoaeStatus {
    guard(|| {
        let p = p.as_mut().ok_or(Failure::Null("predictor"))?;
        if rgb.is_null() {
            return Err(Failure::Null("rgb"));
        }
        if score.is_null() {
            return Err(Failure::Null("score"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(3))
            .ok_or_else(|| Error::arg("image dimensions overflow"))?;
        let img = Image::from_rgb(width, height, std::slice::from_raw_parts(rgb, n).to_vec())?;
        *score = p.inner.predict_quality(&img)?;
        Ok(())
    })
}

/// Scores an image file (PNG).
///
/// # Safety
/// `path` must be a NUL-terminated string; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_predict_file(p: *mut CoaePredictor, path: *const c_char, score: *mut f64) -> CoaeStatus {
    guard(|| {
        let p = p.as_mut().ok_or(Failure::Null("predictor"))?;
        let path = path_arg(path, "path")?.ok_or(Failure::Null("path"))?;
        if score.is_null() {
            return Err(Failure::Null("score"));
        }
        *score = p.inner.predict_quality(&load_image(path)?)?;
        Ok(())
    })
}

/// MOS range seen in training; `mos = min + score * (max - min)`.
///
/// # Safety
/// `p` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_predictor_mos_range(p: *const CoaePredictor, min: *mut f64, max: *mut f64) -> CoaeStatus {
    guard(|| {
        let p = p.as_ref().ok_or(Failure::Null("predictor"))?;
        if min.is_null() || max.is_null() {
            return Err(Failure::Null("min/max"));
        }
        (*min, *max) = p.inner.visor.mos_range;
        Ok(())
    })
}

/// Length of the quality feature vector the head consumes.
///
/// # Safety
/// `p` must be a live handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_predictor_feature_dim(p: *const CoaePredictor, dim: *mut usize) -> CoaeStatus {
    guard(|| {
        let p = p.as_ref().ok_or(Failure::Null("predictor"))?;
        if dim.is_null() {
            return Err(Failure::Null("dim"));
        }
        *dim = p.inner.visor.features.quality_dim(&p.inner.visor.profile);
        Ok(())
    })
}

/// Spearman rank correlation of two length-`n` arrays.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_srcc(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> CoaeStatus {
    guard(|| {
        let (a, b) = (slice_arg(a, n, "a")?, slice_arg(b, n, "b")?);
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = srcc(a, b)?;
        Ok(())
    })
}

/// Pearson linear correlation of two length-`n` arrays.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coae_plcc(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> CoaeStatus {
    guard(|| {
        let (a, b) = (slice_arg(a, n, "a")?, slice_arg(b, n, "b")?);
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = plcc(a, b)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn coae_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn coae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
