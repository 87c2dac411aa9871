//! C ABI over `gesture-core`.
//!
//! Models are opaque handles. Every fallible call returns a
//! [`GestureStatus`]; on failure the message is kept per thread and read
//! back with [`gesture_last_error`]. Skeleton input is a flat row-major
//! buffer of `n_frames * 33` coordinates (11 joints, xyz).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use gesture_core::descriptor::DESCRIPTOR_WIDTH;
use gesture_core::evaluation::{mean_jaccard, LabelPair};
use gesture_core::nn::NetworkModel;
use gesture_core::recurrent::{label_sequence, RnnConfig};
use gesture_core::segmenter::{segment, SegmenterConfig};
use gesture_core::skeleton::DEFAULT_FRAME_RATE;
use gesture_core::{Error, FrameLabels, SkeletonSequence};

/// Coordinates per frame in skeleton buffers.
pub const GESTURE_FRAME_COORDS: usize = 33;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GestureStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    NonFinite = 6,
    Diverged = 7,
    ModelMismatch = 8,
    Missing = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for GestureStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => GestureStatus::Io,
            Error::Parse { .. } => GestureStatus::Parse,
            Error::InvalidArgument(_) => GestureStatus::InvalidArgument,
            Error::Shape { .. } => GestureStatus::Shape,
            Error::NonFinite(_) => GestureStatus::NonFinite,
            Error::Diverged(_) => GestureStatus::Diverged,
            Error::ModelMismatch(_) => GestureStatus::ModelMismatch,
            Error::Missing(_) => GestureStatus::Missing,
        }
    }
}

/// A trained network loaded from a model file.
pub struct GestureModel {
    inner: NetworkModel,
}

/// Inclusive frame interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GesturePeriod {
    pub start: usize,
    pub end: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(GestureStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(GestureStatus::from(&e), format!("{}: {e}", e.category()))
    }
}

fn fail(status: GestureStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, records any error, and turns panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GestureStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GestureStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic: internal error".into());
            GestureStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const GestureModel) -> Result<&'a NetworkModel, Failure> {
    model
        .as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| fail(GestureStatus::NullPointer, "model handle is null"))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(fail(GestureStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(GestureStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn skeleton(coords: *const f64, n_frames: usize) -> Result<SkeletonSequence, Failure> {
    if n_frames == 0 {
        return Err(fail(GestureStatus::InvalidArgument, "n_frames must be positive"));
    }
    let flat = input(coords, n_frames * GESTURE_FRAME_COORDS, "coords")?;
    Ok(SkeletonSequence::from_flat("ffi", DEFAULT_FRAME_RATE, flat)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gesture_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gesture_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Width of one pose descriptor row.
#[no_mangle]
pub extern "C" fn gesture_descriptor_width() -> usize {
    DESCRIPTOR_WIDTH
}

/// Loads a model file. On success `*out` owns a handle that must be
/// released with [`gesture_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gesture_model_load(path: *const c_char, out: *mut *mut GestureModel) -> GestureStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(fail(GestureStatus::NullPointer, "path and out must be non-null"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(GestureStatus::InvalidArgument, "path is not UTF-8"))?;
        let inner = NetworkModel::load(path)?;
        *out = Box::into_raw(Box::new(GestureModel { inner }));
        Ok(())
    })
}

/// Releases a handle from [`gesture_model_load`]. NULL is ignored.
///
/// # Safety
/// `model` must come from [`gesture_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gesture_model_free(model: *mut GestureModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input width the model expects, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gesture_model_input_width(model: *const GestureModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_width())
}

/// Standardized descriptors of a skeleton sequence, using the statistics
/// stored in `model`. `out` receives `n_frames * gesture_descriptor_width()`
/// values, row-major.
///
/// # Safety
/// `coords` must hold `n_frames * 33` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn gesture_descriptors(
    model: *const GestureModel,
    coords: *const f64,
    n_frames: usize,
    out: *mut f64,
    out_len: usize,
) -> GestureStatus {
    guard(|| {
        let m = model_ref(model)?;
        let need = n_frames * DESCRIPTOR_WIDTH;
        if out_len < need {
            return Err(fail(GestureStatus::BufferTooSmall, format!("need {need} values, got {out_len}")));
        }
        let d = m.stats()?.descriptors(&skeleton(coords, n_frames)?)?;
        let dst = output(out, need, "out")?;
        for (o, v) in dst.iter_mut().zip(d.iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Activity periods found by a segmenter model. `threshold` outside (0, 1)
/// selects the default. Writes at most `capacity` periods and always sets
/// `*count` to the number found; returns `BufferTooSmall` if they did not
/// all fit.
///
/// # Safety
/// `coords` must hold `n_frames * 33` values, `periods` room for `capacity`
/// entries (may be NULL when `capacity` is 0), and `count` be writable.
#[no_mangle]
pub unsafe extern "C" fn gesture_segment(
    model: *const GestureModel,
    coords: *const f64,
    n_frames: usize,
    threshold: f64,
    periods: *mut GesturePeriod,
    capacity: usize,
    count: *mut usize,
) -> GestureStatus {
    guard(|| {
        let m = model_ref(model)?;
        if count.is_null() {
            return Err(fail(GestureStatus::NullPointer, "count is null"));
        }
        let mut cfg = SegmenterConfig::default();
        if threshold > 0.0 && threshold < 1.0 {
            cfg.threshold = threshold;
        }
        let d = m.stats()?.descriptors(&skeleton(coords, n_frames)?)?;
        let found = segment(m, d.view(), &cfg)?;
        *count = found.len();
        if capacity > 0 {
            let dst = output(periods, capacity, "periods")?;
            for (o, p) in dst.iter_mut().zip(&found) {
                *o = GesturePeriod { start: p.start, end: p.end };
            }
        }
        if found.len() > capacity {
            return Err(fail(
                GestureStatus::BufferTooSmall,
                format!("{} periods found, room for {capacity}", found.len()),
            ));
        }
        Ok(())
    })
}

/// Per-frame labels (0 = rest, 1..=20 gestures) from a recurrent labeler
/// model. `labels` receives `n_frames` bytes.
///
/// # Safety
/// `coords` must hold `n_frames * 33` values and `labels` `n_frames` bytes.
#[no_mangle]
pub unsafe extern "C" fn gesture_label_sequence(
    model: *const GestureModel,
    coords: *const f64,
    n_frames: usize,
    labels: *mut u8,
) -> GestureStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = m.stats()?.descriptors(&skeleton(coords, n_frames)?)?;
        let out = label_sequence(m, d.view(), &RnnConfig::default())?;
        output(labels, n_frames, "labels")?.copy_from_slice(out.as_slice());
        Ok(())
    })
}

/// Mean Jaccard index of one sequence over the gesture classes present in
/// either labelling. Returns `Missing` when neither contains a gesture.
///
/// # Safety
/// `truth` and `predicted` must hold `n_frames` bytes; `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn gesture_jaccard(truth: *const u8, predicted: *const u8, n_frames: usize, out: *mut f64) -> GestureStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(GestureStatus::NullPointer, "out is null"));
        }
        let t = FrameLabels::new(input(truth, n_frames, "truth")?.to_vec())?;
        let p = FrameLabels::new(input(predicted, n_frames, "predicted")?.to_vec())?;
        let report = mean_jaccard(&[LabelPair {
            sequence_id: "ffi",
            truth: &t,
            predicted: &p,
        }])?;
        *out = report
            .overall
            .ok_or_else(|| fail(GestureStatus::Missing, "no gesture frames in either labelling"))?;
        Ok(())
    })
}
