//! C ABI over `persemon`.
//!
//! Every fallible function returns a [`PersemonStatus`] and writes results
//! through out-pointers. On failure the message is available from
//! [`persemon_last_error`] until the next call on the same thread. Handles
//! are opaque; release them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use persemon::data::{load_datasets, Datasets};
use persemon::engine::Tensor;
use persemon::eval::{evaluate_model, mean_accuracy, mse, r_squared, EvalOptions};
use persemon::model::{fuse_pam_ram, ArchitectureConfig, Model};
use persemon::train::load_model;
use persemon::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PersemonStatus {
    Ok = 0,
    /// Unclassified failure.
    Error = 1,
    /// Invalid configuration or checkpoint/architecture mismatch.
    Config = 2,
    /// Non-finite values.
    Numerical = 3,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 5,
    /// Shapes or lengths do not fit.
    Dimension = 6,
    /// A metric is undefined for the input, e.g. R² of constant labels.
    Undefined = 7,
    Io = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// Trained or freshly initialized network.
pub struct PersemonModel {
    inner: Model,
}

/// Loaded dataset directory.
pub struct PersemonDataset {
    inner: Datasets,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PersemonStatus {
    match e {
        Error::Config { .. } | Error::ArchitectureMismatch(_) => PersemonStatus::Config,
        Error::NonFinite(_) | Error::NumericalAbort { .. } => PersemonStatus::Numerical,
        Error::Dimension { .. } | Error::Contract(_) => PersemonStatus::Dimension,
        Error::Undefined(_) => PersemonStatus::Undefined,
        Error::Io(_) | Error::Format { .. } | Error::Json(_) => PersemonStatus::Io,
        _ => PersemonStatus::Error,
    }
}

struct Fail(PersemonStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(PersemonStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PersemonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PersemonStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside persemon");
            PersemonStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(invalid("null path"));
    }
    // SAFETY: caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid("null input buffer"));
    }
    // SAFETY: caller guarantees `n` readable values.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

unsafe fn write_out(dst: *mut f64, values: &[f64]) -> Result<(), Fail> {
    if values.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(invalid("null output buffer"));
    }
    // SAFETY: caller guarantees room for `values.len()` values.
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), dst, values.len()) };
    Ok(())
}

unsafe fn model_ref<'a>(m: *const PersemonModel) -> Result<&'a Model, Fail> {
    // SAFETY: non-null handles come from `persemon_model_*` constructors.
    unsafe { m.as_ref() }.map(|m| &m.inner).ok_or_else(|| invalid("null model"))
}

unsafe fn images(model: &Model, data: *const f64, n: usize) -> Result<Tensor, Fail> {
    let s = model.arch.input_size;
    let values = unsafe { slice(data, n * s * s) }?;
    Ok(Tensor::new(vec![n, 1, s, s], values.to_vec())?)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn persemon_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Fresh model with the `micro` or `full` preset.
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_new(preset: *const c_char, seed: u64, out: *mut *mut PersemonModel) -> PersemonStatus {
    guard(|| {
        if preset.is_null() || out.is_null() {
            return Err(invalid("null argument"));
        }
        let name = unsafe { CStr::from_ptr(preset) }.to_str().map_err(|_| invalid("preset is not UTF-8"))?;
        let arch = match name {
            "micro" => ArchitectureConfig::micro(),
            "full" => ArchitectureConfig::full(),
            other => return Err(Fail(PersemonStatus::Config, format!("unknown preset `{other}`"))),
        };
        let model = Model::new(arch, seed)?;
        unsafe { *out = Box::into_raw(Box::new(PersemonModel { inner: model })) };
        Ok(())
    })
}

/// Loads the model stored in a checkpoint directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_load(dir: *const c_char, out: *mut *mut PersemonModel) -> PersemonStatus {
    guard(|| {
        let dir = unsafe { path_arg(dir) }?;
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        let model = load_model(&dir, None)?;
        unsafe { *out = Box::into_raw(Box::new(PersemonModel { inner: model })) };
        Ok(())
    })
}

/// # Safety
/// `model` must come from a constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_free(model: *mut PersemonModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Side length of the square single-channel input images.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_input_size(model: *const PersemonModel, out: *mut usize) -> PersemonStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        unsafe { *out = m.arch.input_size };
        Ok(())
    })
}

/// Length of one feature vector.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_feature_dim(model: *const PersemonModel, out: *mut usize) -> PersemonStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        unsafe { *out = m.arch.feature_dim };
        Ok(())
    })
}

/// Backbone features of `n` row-major `S x S` images into `out[n * D]`.
///
/// # Safety
/// `images` holds `n * S * S` values and `out` has room for `n * D`.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_features(
    model: *const PersemonModel,
    images_ptr: *const f64,
    n: usize,
    out: *mut f64,
) -> PersemonStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let x = unsafe { images(m, images_ptr, n) }?;
        let f = m.features(&x)?;
        unsafe { write_out(out, f.data()) }
    })
}

/// Arousal and valence of `n` images into `out[n * 2]`.
///
/// # Safety
/// `images` holds `n * S * S` values and `out` has room for `2 * n`.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_emotion(
    model: *const PersemonModel,
    images_ptr: *const f64,
    n: usize,
    out: *mut f64,
) -> PersemonStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let x = unsafe { images(m, images_ptr, n) }?;
        let e = m.emotion(&x)?;
        unsafe { write_out(out, e.data()) }
    })
}

/// Big-Five traits of one video from its `k` sampled frames. Writes five
/// values each to `pam`, `ram` and `fused`; `fused` weights the two paths
/// by `w_pam : w_ram`. Any output pointer may be null to skip it.
///
/// # Safety
/// `frames` holds `k * S * S` values; non-null outputs have room for 5.
#[no_mangle]
pub unsafe extern "C" fn persemon_model_personality(
    model: *const PersemonModel,
    frames: *const f64,
    k: usize,
    w_pam: f64,
    w_ram: f64,
    pam: *mut f64,
    ram: *mut f64,
    fused: *mut f64,
) -> PersemonStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let x = unsafe { images(m, frames, k) }?;
        let p = m.personality(&x)?;
        let f = fuse_pam_ram(&p.pam, &p.ram, w_pam, w_ram)?;
        for (dst, v) in [(pam, &p.pam), (ram, &p.ram), (fused, &f)] {
            if !dst.is_null() {
                unsafe { write_out(dst, v) }?;
            }
        }
        Ok(())
    })
}

/// Loads a dataset directory written by `persemon gen-data`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn persemon_dataset_load(dir: *const c_char, out: *mut *mut PersemonDataset) -> PersemonStatus {
    guard(|| {
        let dir = unsafe { path_arg(dir) }?;
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        let (ds, _) = load_datasets(&dir)?;
        unsafe { *out = Box::into_raw(Box::new(PersemonDataset { inner: ds })) };
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`persemon_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn persemon_dataset_free(ds: *mut PersemonDataset) {
    if !ds.is_null() {
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Held-out sizes: emotion frames and personality videos.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn persemon_dataset_eval_counts(
    ds: *const PersemonDataset,
    n_emotion: *mut usize,
    n_videos: *mut usize,
) -> PersemonStatus {
    guard(|| {
        let d = unsafe { ds.as_ref() }.ok_or_else(|| invalid("null dataset"))?;
        if n_emotion.is_null() || n_videos.is_null() {
            return Err(invalid("null out pointer"));
        }
        unsafe {
            *n_emotion = d.inner.emotion_eval.len();
            *n_videos = d.inner.personality_eval.len();
        }
        Ok(())
    })
}

/// Evaluates `model` on the held-out splits with `k` frames per video.
/// Writes the mean MSE of the PAM, RAM and fused personality paths and the
/// emotion MSE.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn persemon_evaluate(
    model: *const PersemonModel,
    ds: *const PersemonDataset,
    k: usize,
    seed: u64,
    out_mse: *mut PersemonEvalMse,
) -> PersemonStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let d = unsafe { ds.as_ref() }.ok_or_else(|| invalid("null dataset"))?;
        if out_mse.is_null() {
            return Err(invalid("null out pointer"));
        }
        let opts = EvalOptions {
            k,
            seed,
            ..EvalOptions::default()
        };
        let r = evaluate_model(m, &d.inner, &opts)?;
        let get = |p: &Option<persemon::eval::PersonalityMetrics>| p.as_ref().map_or(f64::NAN, |p| p.mse);
        unsafe {
            *out_mse = PersemonEvalMse {
                pam: get(&r.pam),
                ram: get(&r.ram),
                fused: get(&r.fused),
                emotion: r.emotion.as_ref().map_or(f64::NAN, |e| e.mse),
            };
        }
        Ok(())
    })
}

/// Mean squared errors reported by [`persemon_evaluate`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PersemonEvalMse {
    pub pam: f64,
    pub ram: f64,
    pub fused: f64,
    pub emotion: f64,
}

unsafe fn metric(
    labels: *const f64,
    preds: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> persemon::Result<f64>,
) -> PersemonStatus {
    guard(|| {
        let y = unsafe { slice(labels, n) }?;
        let p = unsafe { slice(preds, n) }?;
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        let v = f(y, p)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// `1 - mean |y - p|` over `n` pairs.
///
/// # Safety
/// `labels` and `preds` hold `n` values; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn persemon_mean_accuracy(labels: *const f64, preds: *const f64, n: usize, out: *mut f64) -> PersemonStatus {
    unsafe { metric(labels, preds, n, out, mean_accuracy) }
}

/// Coefficient of determination over `n` pairs.
///
/// # Safety
/// `labels` and `preds` hold `n` values; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn persemon_r_squared(labels: *const f64, preds: *const f64, n: usize, out: *mut f64) -> PersemonStatus {
    unsafe { metric(labels, preds, n, out, r_squared) }
}

/// Mean squared error over `n` pairs.
///
/// # Safety
/// `labels` and `preds` hold `n` values; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn persemon_mse(labels: *const f64, preds: *const f64, n: usize, out: *mut f64) -> PersemonStatus {
    unsafe { metric(labels, preds, n, out, mse) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(persemon_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn header_declares_every_export() {
        let header = include_str!("../include/persemon.h");
        let source = include_str!("lib.rs");
        let exports: Vec<&str> = source
            .lines()
            .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
            .filter_map(|rest| rest.split('(').next())
            .collect();
        assert!(exports.len() >= 15);
        for name in exports {
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
        }
    }

    #[test]
    fn metrics_cross_the_boundary() {
        let y = [0.0, 1.0];
        let p = [0.25, 0.75];
        let mut out = 0.0;
        unsafe {
            assert_eq!(persemon_r_squared(y.as_ptr(), p.as_ptr(), 2, &mut out), PersemonStatus::Ok);
            assert!((out - 0.75).abs() < 1e-12);
            assert_eq!(persemon_mean_accuracy(y.as_ptr(), p.as_ptr(), 2, &mut out), PersemonStatus::Ok);
            assert!((out - 0.75).abs() < 1e-12);
            assert_eq!(persemon_mse(y.as_ptr(), p.as_ptr(), 2, &mut out), PersemonStatus::Ok);
            assert!((out - 0.0625).abs() < 1e-12);
        }
        assert_eq!(last_error(), "");
    }

    #[test]
    fn errors_map_to_status_codes() {
        let c = [0.3, 0.3];
        let mut out = 0.0;
        unsafe {
            assert_eq!(persemon_r_squared(c.as_ptr(), c.as_ptr(), 2, &mut out), PersemonStatus::Undefined);
            assert!(last_error().contains("R²"));
            assert_eq!(
                persemon_mse(ptr::null(), c.as_ptr(), 2, &mut out),
                PersemonStatus::InvalidArgument
            );
            let mut m = ptr::null_mut();
            let bad = CString::new("huge").unwrap();
            assert_eq!(persemon_model_new(bad.as_ptr(), 0, &mut m), PersemonStatus::Config);
            assert!(m.is_null());
            let missing = CString::new("/nonexistent/checkpoint").unwrap();
            assert_ne!(persemon_model_load(missing.as_ptr(), &mut m), PersemonStatus::Ok);
            assert!(!last_error().is_empty());
        }
    }

    #[test]
    fn model_handle_round_trip() {
        let name = CString::new("micro").unwrap();
        let mut m = ptr::null_mut();
        unsafe {
            assert_eq!(persemon_model_new(name.as_ptr(), 3, &mut m), PersemonStatus::Ok);
            let (mut s, mut d) = (0, 0);
            persemon_model_input_size(m, &mut s);
            persemon_model_feature_dim(m, &mut d);
            assert_eq!((s, d), (32, 64));
            let frames = vec![0.2; 3 * s * s];
            let mut emo = [0.0; 6];
            assert_eq!(persemon_model_emotion(m, frames.as_ptr(), 3, emo.as_mut_ptr()), PersemonStatus::Ok);
            assert!(emo.iter().all(|v| v.abs() < 1.0));
            assert_eq!(emo[0..2], emo[2..4]);
            let (mut pam, mut ram, mut fused) = ([0.0; 5], [0.0; 5], [0.0; 5]);
            let st = persemon_model_personality(m, frames.as_ptr(), 3, 6.0, 1.0, pam.as_mut_ptr(), ram.as_mut_ptr(), fused.as_mut_ptr());
            assert_eq!(st, PersemonStatus::Ok);
            for j in 0..5 {
                assert!((fused[j] - (6.0 * pam[j] + ram[j]) / 7.0).abs() < 1e-12);
            }
            assert_eq!(
                persemon_model_personality(m, frames.as_ptr(), 3, 0.0, 1.0, pam.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()),
                PersemonStatus::Dimension
            );
            let mut feats = vec![0.0; 3 * d];
            assert_eq!(persemon_model_features(m, frames.as_ptr(), 3, feats.as_mut_ptr()), PersemonStatus::Ok);
            persemon_model_free(m);
            persemon_model_free(ptr::null_mut());
        }
    }
}
