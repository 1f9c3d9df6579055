//! C ABI over the bowmotion library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! `BmStatus`; on failure `bm_last_error` describes what went wrong on the
//! calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bowmotion::audio_features::{extract_features, read_wav, AudioClip};
use bowmotion::metrics::{evaluate_with, EvalOptions};
use bowmotion::model::{generate, ModelWeights};
use bowmotion::training::lr_schedule;
use bowmotion::{Error, Matrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Ok = 0,
    InvalidInput = 1,
    Shape = 2,
    Io = 3,
    Format = 4,
    NonFinite = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Row-major matrix of doubles.
pub struct BmMatrix(Matrix);

/// Loaded generator weights.
pub struct BmModel(ModelWeights);

/// Evaluation scores, in report column order.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BmMetrics {
    pub l1_avg: f64,
    pub l1_hand_avg: f64,
    pub pck: f64,
    pub bow_x: f64,
    pub bow_y: f64,
    pub bow_z: f64,
    pub bow_avg: f64,
    pub cosine_similarity: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BmStatus {
    match e {
        Error::InvalidInput(_) | Error::Pieces { .. } => BmStatus::InvalidInput,
        Error::Shape(_) => BmStatus::Shape,
        Error::Io { .. } => BmStatus::Io,
        Error::Format { .. } | Error::Wav(_) | Error::Json(_) => BmStatus::Format,
        Error::NonFiniteGradient(_) => BmStatus::NonFinite,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BmStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            BmStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            BmStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidInput(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or "" after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn bm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `rows * cols` row-major values into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn bm_matrix_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut BmMatrix) -> BmStatus {
    guard(|| {
        let n = rows.checked_mul(cols).ok_or_else(|| Error::InvalidInput("matrix too large".into()))?;
        let values = if n == 0 {
            Vec::new()
        } else {
            non_null(data, "data")?;
            std::slice::from_raw_parts(data, n).to_vec()
        };
        put(out, BmMatrix(Matrix::from_vec(rows, cols, values)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_matrix_rows(m: *const BmMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

#[no_mangle]
pub unsafe extern "C" fn bm_matrix_cols(m: *const BmMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the matrix into `dst`, which must hold `len >= rows * cols` values.
#[no_mangle]
pub unsafe extern "C" fn bm_matrix_copy(m: *const BmMatrix, dst: *mut f64, len: usize) -> BmStatus {
    guard(|| {
        let m = non_null(m, "matrix")?;
        let src = m.0.as_slice();
        if len < src.len() {
            return Err(Error::Shape(format!("buffer holds {len} values, matrix has {}", src.len())).into());
        }
        if !src.is_empty() {
            if dst.is_null() {
                return Err(Failure::Null("dst"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_matrix_free(m: *mut BmMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// 28-column feature frames of a mono clip at 30 frames per second.
#[no_mangle]
pub unsafe extern "C" fn bm_features_from_samples(
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    out: *mut *mut BmMatrix,
) -> BmStatus {
    guard(|| {
        non_null(samples, "samples")?;
        let data: Vec<f64> = std::slice::from_raw_parts(samples, len).iter().map(|&s| f64::from(s)).collect();
        let clip = AudioClip::new(data, sample_rate)?;
        put(out, BmMatrix(extract_features(&clip)?.frames))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_features_from_wav(path: *const c_char, out: *mut *mut BmMatrix) -> BmStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        put(out, BmMatrix(extract_features(&read_wav(&path)?)?.frames))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_model_load(path: *const c_char, out: *mut *mut BmModel) -> BmStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        put(out, BmModel(ModelWeights::load(&path)?))
    })
}

/// Generates an `L x 45` skeleton from `L x 28` raw features.
#[no_mangle]
pub unsafe extern "C" fn bm_model_generate(
    model: *const BmModel,
    features: *const BmMatrix,
    out: *mut *mut BmMatrix,
) -> BmStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let features = non_null(features, "features")?;
        put(out, BmMatrix(generate(&model.0, &features.0)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_model_free(m: *mut BmModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Scores a predicted skeleton against ground truth with default options.
#[no_mangle]
pub unsafe extern "C" fn bm_metrics_evaluate(
    pred: *const BmMatrix,
    gt: *const BmMatrix,
    out: *mut BmMetrics,
) -> BmStatus {
    guard(|| {
        let pred = non_null(pred, "pred")?;
        let gt = non_null(gt, "gt")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let r = evaluate_with(&pred.0, &gt.0, &EvalOptions::default())?;
        *out = BmMetrics {
            l1_avg: r.l1_avg,
            l1_hand_avg: r.l1_hand_avg,
            pck: r.pck,
            bow_x: r.bow_x,
            bow_y: r.bow_y,
            bow_z: r.bow_z,
            bow_avg: r.bow_avg,
            cosine_similarity: r.cosine_similarity,
        };
        Ok(())
    })
}

/// Warmup then inverse-square-root learning rate at step `step >= 1`.
#[no_mangle]
pub unsafe extern "C" fn bm_lr_schedule(step: u64, d_model: usize, k: f64, warmup: u64, out: *mut f64) -> BmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = lr_schedule(step, d_model, k, warmup)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(bm_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn version_is_the_crate_version() {
        let v = unsafe { CStr::from_ptr(bm_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn matrix_round_trip() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut m = ptr::null_mut();
        unsafe {
            assert_eq!(bm_matrix_new(2, 3, data.as_ptr(), &mut m), BmStatus::Ok);
            assert_eq!((bm_matrix_rows(m), bm_matrix_cols(m)), (2, 3));
            let mut back = [0.0; 6];
            assert_eq!(bm_matrix_copy(m, back.as_mut_ptr(), 6), BmStatus::Ok);
            assert_eq!(back, data);
            assert_eq!(bm_matrix_copy(m, back.as_mut_ptr(), 5), BmStatus::Shape);
            bm_matrix_free(m);
        }
    }

    #[test]
    fn null_pointers_are_reported() {
        let mut out = 0.0;
        unsafe {
            assert_eq!(bm_lr_schedule(1, 512, 1.0, 500, ptr::null_mut()), BmStatus::NullPointer);
            assert!(last_error().contains("out"));
            assert_eq!(bm_lr_schedule(1, 512, 1.0, 500, &mut out), BmStatus::Ok);
            assert_eq!(last_error(), "");
            let mut m = ptr::null_mut();
            assert_eq!(bm_model_load(ptr::null(), &mut m), BmStatus::NullPointer);
            assert!(m.is_null());
        }
    }

    #[test]
    fn schedule_errors_map_to_invalid_input() {
        let mut out = 0.0;
        unsafe {
            assert_eq!(bm_lr_schedule(0, 512, 1.0, 500, &mut out), BmStatus::InvalidInput);
        }
        assert!(!last_error().is_empty());
    }

    #[test]
    fn missing_file_is_io() {
        let path = CString::new("/nonexistent/model.bgw").unwrap();
        let mut m = ptr::null_mut();
        unsafe {
            assert_eq!(bm_model_load(path.as_ptr(), &mut m), BmStatus::Io);
        }
        assert!(last_error().contains("nonexistent"));
    }
}
