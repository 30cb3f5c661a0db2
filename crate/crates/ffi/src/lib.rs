//! C interface to facefit.
//!
//! Objects cross the boundary as opaque handles created by `ff_*_new` /
//! `ff_*_load` style functions and released with the matching `ff_*_free`.
//! Every fallible call returns an [`FfStatus`]; on failure the message is
//! kept per thread and can be read with [`ff_last_error_message`].
//! Panics never unwind into C: they are caught and reported as
//! `FF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use facefit::fitter::{fit_image, FitConfig, FitInputs, FitResult};
use facefit::{io, CameraParams, Error, FaceParams, MorphableModel, Vec3};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    NoCorrespondences = 6,
    Degenerate = 7,
    Panic = 99,
}

/// Pinhole camera, same fields as the camera JSON sidecar.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfCamera {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub focal_length: f64,
    pub principal_point: [f64; 2],
}

/// Benchmark metrics of one evaluation (millimetres).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FfMetrics {
    pub l1_mm: f64,
    pub l2_mm: f64,
    pub nc: f64,
    pub recall_2_5: f64,
    pub points: usize,
}

/// Opaque morphable model.
pub struct FfModel(MorphableModel);

/// Opaque single-image fit result.
pub struct FfFitResult(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> FfStatus {
    match err {
        Error::Io { .. } => FfStatus::Io,
        Error::MalformedHeader { .. } | Error::Truncated { .. } | Error::Parse { .. } | Error::Format { .. } => {
            FfStatus::Format
        }
        Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => FfStatus::DimensionMismatch,
        Error::NoCorrespondences { .. } => FfStatus::NoCorrespondences,
        Error::DegenerateGeometry(_) | Error::DegenerateLandmarks(_) | Error::NearZeroDepth { .. } => {
            FfStatus::Degenerate
        }
        _ => FfStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (FfStatus, String)>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            FfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FfStatus::Panic
        }
    }
}

fn lib<T>(r: facefit::Result<T>) -> Result<T, (FfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FfStatus, String) {
    (FfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (FfStatus, String) {
    (FfStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (FfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (FfStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (FfStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn camera_from(c: &FfCamera) -> CameraParams {
    CameraParams {
        rotation: c.rotation,
        translation: c.translation,
        focal_length: c.focal_length,
        principal_point: c.principal_point,
    }
}

fn camera_to(c: &CameraParams) -> FfCamera {
    FfCamera {
        rotation: c.rotation,
        translation: c.translation,
        focal_length: c.focal_length,
        principal_point: c.principal_point,
    }
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in
/// bytes, excluding the terminator; 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ff_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a P3DM model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_model_load(path: *const c_char, out: *mut *mut FfModel) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let m = lib(io::load_model(path))?;
        *out = Box::into_raw(Box::new(FfModel(m)));
        Ok(())
    })
}

/// The built-in synthetic head model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_model_sphere_head(out: *mut *mut FfModel) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(FfModel(facefit::synth::sphere_head())));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_model_free(model: *mut FfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes vertex, triangle, identity and expression counts. Any output
/// pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_model_dims(
    model: *const FfModel,
    n_vertices: *mut usize,
    n_triangles: *mut usize,
    n_id: *mut usize,
    n_ex: *mut usize,
) -> FfStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        for (p, v) in [
            (n_vertices, m.num_vertices()),
            (n_triangles, m.num_triangles()),
            (n_id, m.n_id),
            (n_ex, m.n_ex),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Posed vertices for the given coefficients, written as `x y z` triples
/// into `out_xyz` (length `3 * n_vertices`).
///
/// # Safety
/// Array arguments must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ff_model_forward(
    model: *const FfModel,
    z_id: *const f64,
    n_id: usize,
    z_ex: *const f64,
    n_ex: usize,
    jaw_theta: *const f64,
    out_xyz: *mut f64,
    out_len: usize,
) -> FfStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let face = FaceParams {
            z_id: slice_arg(z_id, n_id, "z_id")?.to_vec(),
            z_ex: slice_arg(z_ex, n_ex, "z_ex")?.to_vec(),
            jaw_theta: slice_arg(jaw_theta, 3, "jaw_theta")?.try_into().unwrap(),
        };
        if out_len != 3 * m.num_vertices() {
            return Err(invalid(format!("out_len must be {}", 3 * m.num_vertices())));
        }
        let v = lib(m.forward(&face))?;
        let out = slice_out(out_xyz, out_len, "out_xyz")?;
        for (i, p) in v.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
        }
        Ok(())
    })
}

/// Projects `n` points (`x y z` triples) to pixels (`u v` pairs) and depths.
///
/// # Safety
/// Array arguments must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ff_project(
    points_xyz: *const f64,
    n: usize,
    camera: *const FfCamera,
    out_uv: *mut f64,
    out_depth: *mut f64,
) -> FfStatus {
    guard(|| {
        let cam = camera_from(camera.as_ref().ok_or_else(|| null("camera"))?);
        lib(cam.validate())?;
        let pts = slice_arg(points_xyz, 3 * n, "points_xyz")?;
        let pts: Vec<Vec3> = pts.chunks_exact(3).map(Vec3::from_column_slice).collect();
        let proj = facefit::camera::project(&pts, &cam);
        let uv = slice_out(out_uv, 2 * n, "out_uv")?;
        for (i, p) in proj.pixels.iter().enumerate() {
            uv[2 * i] = p.x;
            uv[2 * i + 1] = p.y;
        }
        if !out_depth.is_null() {
            slice_out(out_depth, n, "out_depth")?.copy_from_slice(&proj.depths);
        }
        Ok(())
    })
}

/// Fits the model to a uv map, normal map and mask on disk. `config_path`
/// may be null for defaults.
///
/// # Safety
/// Paths must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_fit_image_files(
    model: *const FfModel,
    uv_path: *const c_char,
    normal_path: *const c_char,
    mask_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut FfFitResult,
) -> FfStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config_path.is_null() {
            FitConfig::default()
        } else {
            lib(FitConfig::load(&path_arg(config_path, "config_path")?))?
        };
        let uv = lib(io::load_map(path_arg(uv_path, "uv_path")?).and_then(|u| u.truncate_channels(2)))?;
        let normal = lib(io::load_map(path_arg(normal_path, "normal_path")?))?;
        let mask = lib(io::load_mask(path_arg(mask_path, "mask_path")?))?;
        let res = lib(fit_image(m, &FitInputs::new(uv, normal, mask), &cfg))?;
        *out = Box::into_raw(Box::new(FfFitResult(res)));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_fit_result_free(result: *mut FfFitResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Fitted camera.
///
/// # Safety
/// `result` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_fit_result_camera(result: *const FfFitResult, out: *mut FfCamera) -> FfStatus {
    guard(|| {
        let r = &result.as_ref().ok_or_else(|| null("result"))?.0;
        *out.as_mut().ok_or_else(|| null("out"))? = camera_to(&r.cam);
        Ok(())
    })
}

/// Fitted coefficients. Lengths must match the model dimensions.
///
/// # Safety
/// Output arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ff_fit_result_face(
    result: *const FfFitResult,
    z_id: *mut f64,
    n_id: usize,
    z_ex: *mut f64,
    n_ex: usize,
    jaw_theta: *mut f64,
) -> FfStatus {
    guard(|| {
        let r = &result.as_ref().ok_or_else(|| null("result"))?.0;
        if n_id != r.face.z_id.len() || n_ex != r.face.z_ex.len() {
            return Err((
                FfStatus::DimensionMismatch,
                format!("expected n_id {} and n_ex {}", r.face.z_id.len(), r.face.z_ex.len()),
            ));
        }
        slice_out(z_id, n_id, "z_id")?.copy_from_slice(&r.face.z_id);
        slice_out(z_ex, n_ex, "z_ex")?.copy_from_slice(&r.face.z_ex);
        slice_out(jaw_theta, 3, "jaw_theta")?.copy_from_slice(&r.face.jaw_theta);
        Ok(())
    })
}

/// Final energy, and the trace length (steps) when `steps` is non-null.
///
/// # Safety
/// `result` must be a live handle; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ff_fit_result_energy(
    result: *const FfFitResult,
    energy: *mut f64,
    steps: *mut usize,
) -> FfStatus {
    guard(|| {
        let r = &result.as_ref().ok_or_else(|| null("result"))?.0;
        *energy.as_mut().ok_or_else(|| null("energy"))? = r.term_breakdown.total;
        if let Some(s) = steps.as_mut() {
            *s = r.energy_trace.len();
        }
        Ok(())
    })
}

/// Aligns a predicted OBJ to a GT PLY with landmark pairs and ICP, then
/// computes metrics. Scales convert both inputs to millimetres.
///
/// # Safety
/// Paths must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_evaluate_files(
    pred_obj: *const c_char,
    gt_ply: *const c_char,
    landmarks_json: *const c_char,
    pred_scale: f64,
    gt_scale: f64,
    out: *mut FfMetrics,
) -> FfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rec = lib(facefit::cli::evaluate_files(
            &path_arg(pred_obj, "pred_obj")?,
            &path_arg(gt_ply, "gt_ply")?,
            &path_arg(landmarks_json, "landmarks_json")?,
            None,
            pred_scale,
            gt_scale,
        ))?;
        *out = FfMetrics {
            l1_mm: rec.l1_mm,
            l2_mm: rec.l2_mm,
            nc: rec.nc,
            recall_2_5: rec.recall_2_5,
            points: rec.points,
        };
        Ok(())
    })
}
