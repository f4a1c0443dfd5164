//! C ABI over `rigfit`.
//!
//! Objects cross the boundary as opaque handles created by a `*_load`,
//! `*_new` or producing call and released with the matching `*_free`.
//! Every fallible call returns a [`RigfitStatus`]; on failure the message
//! is available from [`rigfit_last_error`] on the same thread until the
//! next failing call there.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rigfit::eval::evaluate;
use rigfit::losses::TargetObservation;
use rigfit::mesh::{load_obj, write_obj, TriMesh};
use rigfit::optim::{fit, synth_target, FitReport, StagePlan, SynthOptions};
use rigfit::render::CameraModel;
use rigfit::rig::{load_template, synthetic_head, HeadOptions, RiggedTemplate};
use rigfit::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigfitStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed or inconsistent input (bad file, dimension mismatch,
    /// out-of-range value).
    InvalidInput = 3,
    Io = 4,
    /// The computation broke down (non-finite values, degenerate geometry).
    Numerical = 5,
    /// A fit finished but at least one stage stopped on a failed evaluation.
    StageFailed = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Rigged template plus the camera bundled with it, if any.
pub struct RigfitTemplate {
    template: RiggedTemplate,
    camera: Option<CameraModel>,
}

/// Observed normal map, landmarks and camera.
pub struct RigfitTarget(TargetObservation);

pub struct RigfitMesh(TriMesh);

/// Outcome of a fit.
pub struct RigfitFit(FitReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> RigfitStatus {
    match err {
        Error::Numerical(_) => RigfitStatus::Numerical,
        Error::Io { .. } => RigfitStatus::Io,
        _ => RigfitStatus::InvalidInput,
    }
}

struct Failure(RigfitStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RigfitStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RigfitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RigfitStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            RigfitStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(RigfitStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rigfit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rigfit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a template JSON and its bundled camera.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_template_load(path: *const c_char, out: *mut *mut RigfitTemplate) -> RigfitStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let (template, camera) = load_template(path)?;
        put(out, RigfitTemplate { template, camera })
    })
}

/// Builds the synthetic head template with a square camera of
/// `image_size` pixels.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_template_synthetic(
    columns: usize,
    rows: usize,
    image_size: u32,
    out: *mut *mut RigfitTemplate,
) -> RigfitStatus {
    guard(|| {
        let (template, camera) = synthetic_head(&HeadOptions { columns, rows }, image_size)?;
        put(
            out,
            RigfitTemplate {
                template,
                camera: Some(camera),
            },
        )
    })
}

/// # Safety
/// `t` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rigfit_template_free(t: *mut RigfitTemplate) {
    free(t)
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigfit_template_vertex_count(t: *const RigfitTemplate) -> usize {
    t.as_ref().map_or(0, |t| t.template.vertex_count())
}

/// Controller count, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigfit_template_controller_count(t: *const RigfitTemplate) -> usize {
    t.as_ref().map_or(0, |t| t.template.controller_count())
}

/// Poses the template at random controller values drawn from `range` of
/// each controller's bounds and renders the observation through the
/// template's camera. The posed mesh is written to `truth` when it is not
/// null.
///
/// # Safety
/// `t` must be a live handle; `out` writable; `truth` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_synth(
    t: *const RigfitTemplate,
    seed: u64,
    range: f64,
    out: *mut *mut RigfitTarget,
    truth: *mut *mut RigfitMesh,
) -> RigfitStatus {
    guard(|| {
        let t = borrow(t, "template")?;
        let cam = t.camera.as_ref().ok_or_else(|| {
            Failure(RigfitStatus::InvalidInput, "template carries no camera".into())
        })?;
        let s = synth_target(
            &t.template,
            cam,
            seed,
            &SynthOptions {
                range,
                ..SynthOptions::default()
            },
        )?;
        if out.is_null() {
            return Err(null("output handle"));
        }
        if !truth.is_null() {
            put(truth, RigfitMesh(s.mesh))?;
        }
        put(out, RigfitTarget(s.target))
    })
}

/// Reads an observation directory written by `rigfit_target_save` or the
/// command-line `synth`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_target_load(dir: *const c_char, out: *mut *mut RigfitTarget) -> RigfitStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        put(out, RigfitTarget(TargetObservation::load(dir)?))
    })
}

/// # Safety
/// `target` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rigfit_target_save(target: *const RigfitTarget, dir: *const c_char) -> RigfitStatus {
    guard(|| {
        let target = borrow(target, "target")?;
        let dir = path_arg(dir, "dir")?;
        Ok(target.0.save(dir)?)
    })
}

/// # Safety
/// `t` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rigfit_target_free(t: *mut RigfitTarget) {
    free(t)
}

/// Fits the template to `target` from the neutral pose. `plan_path` may be
/// null for the default rig, joint and vertex plan. A fit whose stage
/// failed still produces `out` and returns `StageFailed`.
///
/// # Safety
/// `t` and `target` must be live handles; `plan_path` null or a
/// NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_fit(
    t: *const RigfitTemplate,
    target: *const RigfitTarget,
    plan_path: *const c_char,
    out: *mut *mut RigfitFit,
) -> RigfitStatus {
    guard(|| {
        let t = borrow(t, "template")?;
        let target = borrow(target, "target")?;
        let plan = if plan_path.is_null() {
            StagePlan::default()
        } else {
            StagePlan::load(path_arg(plan_path, "plan_path")?)?
        };
        if out.is_null() {
            return Err(null("output handle"));
        }
        let report = fit(&t.template, &target.0, &plan)?;
        let failed = report.failed();
        put(out, RigfitFit(report))?;
        if failed {
            return Err(Failure(RigfitStatus::StageFailed, "a fit stage failed".into()));
        }
        Ok(())
    })
}

/// Writes the fitted mesh, state, loss trace and stage summary to `dir`.
///
/// # Safety
/// `f` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rigfit_fit_save(f: *const RigfitFit, dir: *const c_char) -> RigfitStatus {
    guard(|| {
        let f = borrow(f, "fit")?;
        let dir = path_arg(dir, "dir")?;
        Ok(f.0.save(dir)?)
    })
}

/// Copies the fitted mesh into a new mesh handle.
///
/// # Safety
/// `f` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_fit_mesh(f: *const RigfitFit, out: *mut *mut RigfitMesh) -> RigfitStatus {
    guard(|| {
        let f = borrow(f, "fit")?;
        put(out, RigfitMesh(f.0.mesh.clone()))
    })
}

/// Number of stages run, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigfit_fit_stage_count(f: *const RigfitFit) -> usize {
    f.as_ref().map_or(0, |f| f.0.stages.len())
}

/// Lowest total loss reached in stage `stage`, or NaN when out of range.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigfit_fit_stage_loss(f: *const RigfitFit, stage: usize) -> f64 {
    f.as_ref()
        .and_then(|f| f.0.stages.get(stage))
        .map_or(f64::NAN, |s| s.best_loss)
}

/// # Safety
/// `f` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rigfit_fit_free(f: *mut RigfitFit) {
    free(f)
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_mesh_load(path: *const c_char, out: *mut *mut RigfitMesh) -> RigfitStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        put(out, RigfitMesh(load_obj(path)?))
    })
}

/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rigfit_mesh_save(m: *const RigfitMesh, path: *const c_char) -> RigfitStatus {
    guard(|| {
        let m = borrow(m, "mesh")?;
        let path = path_arg(path, "path")?;
        Ok(write_obj(&m.0, path)?)
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigfit_mesh_vertex_count(m: *const RigfitMesh) -> usize {
    m.as_ref().map_or(0, |m| m.0.vertex_count())
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigfit_mesh_face_count(m: *const RigfitMesh) -> usize {
    m.as_ref().map_or(0, |m| m.0.face_count())
}

/// Copies vertex positions as packed `x y z` triples into `xyz`, which
/// holds `len` doubles; `len` must be at least three times the vertex
/// count.
///
/// # Safety
/// `m` must be a live handle; `xyz` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rigfit_mesh_vertices(m: *const RigfitMesh, xyz: *mut f64, len: usize) -> RigfitStatus {
    guard(|| {
        let m = borrow(m, "mesh")?;
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let need = 3 * m.0.vertex_count();
        if len < need {
            return Err(Failure(
                RigfitStatus::InvalidInput,
                format!("buffer holds {len} values, {need} needed"),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(xyz, need);
        for (d, v) in dst.chunks_exact_mut(3).zip(&m.0.vertices) {
            d.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rigfit_mesh_free(m: *mut RigfitMesh) {
    free(m)
}

/// Symmetric RMSE and normal consistency from `n` surface samples per
/// mesh.
///
/// # Safety
/// `a` and `b` must be live handles; `rmse` and `nc` writable.
#[no_mangle]
pub unsafe extern "C" fn rigfit_eval(
    a: *const RigfitMesh,
    b: *const RigfitMesh,
    n: usize,
    seed: u64,
    rmse: *mut f64,
    nc: *mut f64,
) -> RigfitStatus {
    guard(|| {
        let a = borrow(a, "mesh a")?;
        let b = borrow(b, "mesh b")?;
        if rmse.is_null() || nc.is_null() {
            return Err(null("output value"));
        }
        if n == 0 {
            return Err(Failure(RigfitStatus::InvalidInput, "n must be at least 1".into()));
        }
        let r = evaluate(&a.0, &b.0, n, seed, None)?;
        *rmse = r.rmse;
        *nc = r.nc;
        Ok(())
    })
}
