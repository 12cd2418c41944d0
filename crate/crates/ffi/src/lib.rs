//! C ABI over the pose estimation engine.
//!
//! Every handle is opaque and owned by the caller once returned; release it with
//! the matching `np_*_free`. Functions return an [`NpStatus`]; on failure the
//! message is kept per thread and read back with [`np_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nocs_pose::geometry::{Grid, Intrinsics, SimilarityTransform};
use nocs_pose::pipeline::{estimate, EstimateOptions, InferenceRequest, InferenceResult, PoseModel};
use nocs_pose::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    Format = 5,
    EmptyInput = 6,
    Degenerate = 7,
    NoValidHypothesis = 8,
    Runtime = 9,
    Panic = 10,
}

impl From<&Error> for NpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => NpStatus::InvalidArgument,
            Error::ShapeMismatch(_) => NpStatus::ShapeMismatch,
            Error::Io { .. } => NpStatus::Io,
            Error::Format { .. } => NpStatus::Format,
            Error::EmptyCloud | Error::EmptyRender | Error::InsufficientCorrespondences(_) => NpStatus::EmptyInput,
            Error::DegenerateGeometry(_) | Error::DegenerateConfiguration(_) => NpStatus::Degenerate,
            Error::NoValidHypothesis => NpStatus::NoValidHypothesis,
            _ => NpStatus::Runtime,
        }
    }
}

/// A loaded checkpoint.
pub struct NpModel(PoseModel);

/// Inputs for one object: mask and intrinsics plus optional rgb, depth and category.
pub struct NpRequest(InferenceRequest);

/// Outcome of [`np_estimate`].
pub struct NpResult(InferenceResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: NpStatus, msg: impl Into<String>) -> NpStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), NpStatus>) -> NpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            NpStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(NpStatus::Panic, msg)
        }
    }
}

fn lift<T>(r: nocs_pose::Result<T>) -> Result<T, NpStatus> {
    r.map_err(|e| fail(NpStatus::from(&e), e.to_string()))
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, NpStatus> {
    // SAFETY: callers pass pointers obtained from this library or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| fail(NpStatus::NullPointer, format!("{what} is null")))
}

fn non_null_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, NpStatus> {
    // SAFETY: as in `non_null`, and the caller guarantees exclusive access.
    unsafe { p.as_mut() }.ok_or_else(|| fail(NpStatus::NullPointer, format!("{what} is null")))
}

fn write_matrix(t: &SimilarityTransform, out: *mut f64) -> Result<(), NpStatus> {
    if out.is_null() {
        return Err(fail(NpStatus::NullPointer, "output matrix is null"));
    }
    let m = t.to_matrix();
    for r in 0..4 {
        for c in 0..4 {
            // SAFETY: the caller provides room for 16 doubles.
            unsafe { *out.add(r * 4 + c) = m[(r, c)] };
        }
    }
    Ok(())
}

/// Length in bytes of the last error message on this thread, without the terminator.
#[no_mangle]
pub extern "C" fn np_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message on this thread into `buf` as a NUL-terminated
/// string, truncated to `len - 1` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn np_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Load a checkpoint (and its sibling feature basis file, if any).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn np_model_load(path: *const c_char, out: *mut *mut NpModel) -> NpStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        if path.is_null() {
            return Err(fail(NpStatus::NullPointer, "path is null"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(NpStatus::InvalidArgument, "path is not UTF-8"))?;
        let model = lift(PoseModel::load(Path::new(path)))?;
        *out = Box::into_raw(Box::new(NpModel(model)));
        Ok(())
    })
}

/// Release a model; null is ignored.
///
/// # Safety
/// `model` must come from [`np_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn np_model_free(model: *mut NpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side of the square network input.
///
/// # Safety
/// `model` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn np_model_image_size(model: *const NpModel, out: *mut usize) -> NpStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        *non_null_mut(out, "out")? = m.0.image_size();
        Ok(())
    })
}

/// Category id (`1..`) of a category name known to the model.
///
/// # Safety
/// `model` must be a live handle, `name` NUL-terminated, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn np_model_category_id(model: *const NpModel, name: *const c_char, out: *mut u32) -> NpStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let out = non_null_mut(out, "out")?;
        if name.is_null() {
            return Err(fail(NpStatus::NullPointer, "name is null"));
        }
        let name = CStr::from_ptr(name).to_string_lossy();
        let id = m
            .0
            .category_id(&name)
            .ok_or_else(|| fail(NpStatus::InvalidArgument, format!("unknown category '{name}'")))?;
        *out = id as u32;
        Ok(())
    })
}

/// New request from pinhole intrinsics and a row-major `width × height` mask
/// (non-zero = object). All modalities are enabled; ones without inputs are
/// nulled at estimation time.
///
/// # Safety
/// `mask` must be valid for `width * height` bytes; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn np_request_new(
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    mask: *const u8,
    out: *mut *mut NpRequest,
) -> NpStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        if mask.is_null() {
            return Err(fail(NpStatus::NullPointer, "mask is null"));
        }
        let intr = lift(Intrinsics::new(fx, fy, cx, cy, width, height))?;
        let bits = std::slice::from_raw_parts(mask, width * height);
        let mask = lift(Grid::from_vec(width, height, bits.iter().map(|&b| b != 0).collect()))?;
        *out = Box::into_raw(Box::new(NpRequest(InferenceRequest::new(mask, intr))));
        Ok(())
    })
}

/// Release a request; null is ignored.
///
/// # Safety
/// `req` must come from [`np_request_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn np_request_free(req: *mut NpRequest) {
    if !req.is_null() {
        drop(Box::from_raw(req));
    }
}

/// Attach a row-major interleaved rgb image with values in `[0, 1]`.
///
/// # Safety
/// `rgb` must be valid for `3 * width * height` floats.
#[no_mangle]
pub unsafe extern "C" fn np_request_set_rgb(req: *mut NpRequest, rgb: *const f32) -> NpStatus {
    guard(|| {
        let r = non_null_mut(req, "request")?;
        if rgb.is_null() {
            return Err(fail(NpStatus::NullPointer, "rgb is null"));
        }
        let (w, h) = (r.0.intr.width, r.0.intr.height);
        let px = std::slice::from_raw_parts(rgb, 3 * w * h);
        let data = px.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        r.0.rgb = Some(lift(Grid::from_vec(w, h, data))?);
        Ok(())
    })
}

/// Attach a row-major depth map in metres (0 = missing).
///
/// # Safety
/// `depth` must be valid for `width * height` floats.
#[no_mangle]
pub unsafe extern "C" fn np_request_set_depth(req: *mut NpRequest, depth: *const f32) -> NpStatus {
    guard(|| {
        let r = non_null_mut(req, "request")?;
        if depth.is_null() {
            return Err(fail(NpStatus::NullPointer, "depth is null"));
        }
        let (w, h) = (r.0.intr.width, r.0.intr.height);
        let data = std::slice::from_raw_parts(depth, w * h).to_vec();
        r.0.depth = Some(lift(Grid::from_vec(w, h, data))?);
        Ok(())
    })
}

/// Set the category id (`1..`), or 0 for none.
///
/// # Safety
/// `req` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn np_request_set_category(req: *mut NpRequest, category: u32) -> NpStatus {
    guard(|| {
        non_null_mut(req, "request")?.0.category = (category > 0).then_some(category as usize);
        Ok(())
    })
}

/// Set the number of noise hypotheses and the master seed.
///
/// # Safety
/// `req` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn np_request_set_sampling(req: *mut NpRequest, n_noises: usize, seed: u64) -> NpStatus {
    guard(|| {
        if n_noises == 0 {
            return Err(fail(NpStatus::InvalidArgument, "n_noises must be at least 1"));
        }
        let r = non_null_mut(req, "request")?;
        r.0.n_noises = n_noises;
        r.0.seed = seed;
        Ok(())
    })
}

/// Estimate the pose with default options (fast sampling, relative noise bound).
/// Modalities with no attached input are disabled. Depth is required.
///
/// # Safety
/// `model` and `req` must be live handles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn np_estimate(model: *const NpModel, req: *const NpRequest, out: *mut *mut NpResult) -> NpStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let r = non_null(req, "request")?;
        let out = non_null_mut(out, "out")?;
        let mut request = r.0.clone();
        request.modalities.retain(|&md| {
            use nocs_pose::denoiser::Modality;
            match md {
                Modality::Normal => request.depth.is_some(),
                Modality::Rgb | Modality::Feat => request.rgb.is_some(),
                Modality::Category => request.category.is_some(),
            }
        });
        let res = lift(estimate(&request, &m.0, &EstimateOptions::default()))?;
        *out = Box::into_raw(Box::new(NpResult(res)));
        Ok(())
    })
}

/// Release a result; null is ignored.
///
/// # Safety
/// `res` must come from [`np_estimate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn np_result_free(res: *mut NpResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Selected object-to-camera similarity as a row-major 4×4 matrix, its scale
/// and its confidence (inlier rate).
///
/// # Safety
/// `res` must be a live handle; `matrix` valid for 16 doubles; `scale` and
/// `confidence` may be null.
#[no_mangle]
pub unsafe extern "C" fn np_result_pose(
    res: *const NpResult,
    matrix: *mut f64,
    scale: *mut f64,
    confidence: *mut f64,
) -> NpStatus {
    guard(|| {
        let r = non_null(res, "result")?;
        write_matrix(&r.0.best.transform, matrix)?;
        if !scale.is_null() {
            *scale = r.0.best.transform.scale;
        }
        if !confidence.is_null() {
            *confidence = r.0.best.confidence;
        }
        Ok(())
    })
}

/// Number of hypotheses, including failed ones.
///
/// # Safety
/// `res` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn np_result_hypothesis_count(res: *const NpResult, out: *mut usize) -> NpStatus {
    guard(|| {
        *non_null_mut(out, "out")? = non_null(res, "result")?.0.hypotheses.len();
        Ok(())
    })
}

/// Pose of hypothesis `index`. Returns [`NpStatus::NoValidHypothesis`] when
/// registration failed for it.
///
/// # Safety
/// As for [`np_result_pose`].
#[no_mangle]
pub unsafe extern "C" fn np_result_hypothesis(
    res: *const NpResult,
    index: usize,
    matrix: *mut f64,
    confidence: *mut f64,
) -> NpStatus {
    guard(|| {
        let r = non_null(res, "result")?;
        let h = r
            .0
            .hypotheses
            .get(index)
            .ok_or_else(|| fail(NpStatus::InvalidArgument, format!("hypothesis {index} out of range")))?;
        let pose = h.pose.as_ref().ok_or_else(|| {
            fail(
                NpStatus::NoValidHypothesis,
                h.failure.clone().unwrap_or_else(|| "registration failed".into()),
            )
        })?;
        write_matrix(&pose.transform, matrix)?;
        if !confidence.is_null() {
            *confidence = pose.confidence;
        }
        Ok(())
    })
}
