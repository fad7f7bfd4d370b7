//! C ABI for sctune. Handles are opaque; every fallible call returns an
//! `SctStatus` and leaves a message for `sct_last_error` on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sctune::controller::{MpcParams, SharedController};
use sctune::robot::{step_kinematics, JointConfig, RobotState, N_SPHERES};
use sctune::scenarios::MovementSet;
use sctune::sim::{evaluate_params, EvalConfig, Scene};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SctStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Internal = 4,
    Panic = 5,
}

/// Controller parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SctParams {
    pub np: u32,
    pub nc: u32,
    pub qx: f64,
    pub qy: f64,
    pub qtheta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl From<MpcParams> for SctParams {
    fn from(p: MpcParams) -> Self {
        Self { np: p.np as u32, nc: p.nc as u32, qx: p.qx, qy: p.qy, qtheta: p.qtheta, c1: p.c1, c2: p.c2 }
    }
}

impl From<SctParams> for MpcParams {
    fn from(p: SctParams) -> Self {
        Self { np: p.np as usize, nc: p.nc as usize, qx: p.qx, qy: p.qy, qtheta: p.qtheta, c1: p.c1, c2: p.c2 }
    }
}

/// Outcome of one control cycle.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SctStep {
    /// Applied joint velocities.
    pub u: [f64; 3],
    /// Joint configuration after one sample time.
    pub q_next: [f64; 3],
    /// End-effector pose (x, y, theta) after one sample time.
    pub ee_next: [f64; 3],
    pub feasible: bool,
}

/// Summary of a corpus evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SctEvalSummary {
    pub objective: f64,
    pub n_movements: usize,
    pub n_succ: usize,
    pub min_sd: f64,
    pub max_infeasible_fraction: f64,
}

/// Environment, robot geometry and distance field.
pub struct SctScene(Scene);

/// Stateful shared controller bound to a scene.
pub struct SctController {
    ctl: SharedController,
    scene: Scene,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &sctune::Error) -> SctStatus {
    match e {
        sctune::Error::Io(_) => SctStatus::Io,
        sctune::Error::Evaluator(_) => SctStatus::Internal,
        _ => SctStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SctStatus, String)>) -> SctStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SctStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SctStatus::Panic
        }
    }
}

fn lib_err(e: sctune::Error) -> (SctStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SctStatus, String) {
    (SctStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SctStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (SctStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sct_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn sct_params_baseline() -> SctParams {
    MpcParams::baseline().into()
}

/// Builds a built-in environment (`operating-room`, `default` or `empty`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sct_scene_new(name: *const c_char, out: *mut *mut SctScene) -> SctStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let name = str_arg(name, "name")?;
        let scene = Scene::builtin(name).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SctScene(scene)));
        Ok(())
    })
}

/// # Safety
/// `scene` must come from `sct_scene_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sct_scene_free(scene: *mut SctScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Signed distance (m) from a world point to the nearest obstacle.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sct_scene_signed_distance(scene: *const SctScene, x: f64, y: f64, out: *mut f64) -> SctStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = scene.0.esdf.signed_distance([x, y]);
        Ok(())
    })
}

/// Number of collision spheres, the length of `sct_scene_sphere_distances` output.
#[no_mangle]
pub extern "C" fn sct_sphere_count() -> usize {
    N_SPHERES
}

/// Distances of all collision sphere centres at joint configuration `q`.
///
/// # Safety
/// `q` points to 3 doubles and `out` to `sct_sphere_count()` doubles.
#[no_mangle]
pub unsafe extern "C" fn sct_scene_sphere_distances(scene: *const SctScene, q: *const f64, out: *mut f64) -> SctStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        if q.is_null() {
            return Err(null("q"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let q = std::slice::from_raw_parts(q, 3);
        let d = scene.0.sphere_distances(&JointConfig::new(q[0], q[1], q[2]));
        std::slice::from_raw_parts_mut(out, N_SPHERES).copy_from_slice(&d);
        Ok(())
    })
}

/// Creates a controller with the default controller configuration.
///
/// # Safety
/// Pointers must be valid; the scene may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn sct_controller_new(
    scene: *const SctScene,
    params: *const SctParams,
    out: *mut *mut SctController,
) -> SctStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        let cfg = EvalConfig::default().controller;
        let ctl = SharedController::new((*params).into(), cfg, scene.0.geometry.clone(), scene.0.esdf.clone()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SctController { ctl, scene: scene.0.clone() }));
        Ok(())
    })
}

/// # Safety
/// `ctl` must come from `sct_controller_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sct_controller_free(ctl: *mut SctController) {
    if !ctl.is_null() {
        drop(Box::from_raw(ctl));
    }
}

/// Forgets the warm start and input history.
///
/// # Safety
/// `ctl` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sct_controller_reset(ctl: *mut SctController) -> SctStatus {
    guard(|| {
        ctl.as_mut().ok_or_else(|| null("ctl"))?.ctl.reset();
        Ok(())
    })
}

/// One control cycle from configuration `q` (3 doubles) with the operator
/// twist `xd` (vx, vy, omega).
///
/// # Safety
/// Pointers must be valid; `q` and `xd` point to 3 doubles each.
#[no_mangle]
pub unsafe extern "C" fn sct_controller_step(
    ctl: *mut SctController,
    q: *const f64,
    xd: *const f64,
    out: *mut SctStep,
) -> SctStatus {
    guard(|| {
        let c = ctl.as_mut().ok_or_else(|| null("ctl"))?;
        if q.is_null() {
            return Err(null("q"));
        }
        if xd.is_null() {
            return Err(null("xd"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let q = std::slice::from_raw_parts(q, 3);
        let xd = std::slice::from_raw_parts(xd, 3);
        if q.iter().chain(xd).any(|v| !v.is_finite()) {
            return Err((SctStatus::InvalidArgument, "inputs must be finite".into()));
        }
        let geom = &c.scene.geometry;
        let state = RobotState::from_joints(JointConfig::new(q[0], q[1], q[2]), geom);
        let r = c.ctl.step(&state, [xd[0], xd[1], xd[2]]);
        let next = step_kinematics(&state, r.u0, c.ctl.config().ts, geom);
        *out = SctStep { u: r.u0, q_next: next.joints.to_array(), ee_next: next.ee.to_array(), feasible: r.feasible };
        Ok(())
    })
}

/// Evaluates `params` on a movement corpus file with the default settings.
///
/// # Safety
/// Pointers must be valid; `corpus_path` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sct_evaluate(
    scene: *const SctScene,
    params: *const SctParams,
    corpus_path: *const c_char,
    out: *mut SctEvalSummary,
) -> SctStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        let params: MpcParams = (*params.as_ref().ok_or_else(|| null("params"))?).into();
        let path = str_arg(corpus_path, "corpus_path")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let set = MovementSet::load(Path::new(path)).map_err(lib_err)?;
        let r = evaluate_params(&params, &set, &scene.0, &EvalConfig::default()).map_err(lib_err)?;
        *out = SctEvalSummary {
            objective: r.objective,
            n_movements: r.movements.len(),
            n_succ: r.n_succ,
            min_sd: r.min_sd(),
            max_infeasible_fraction: r.max_infeasible_fraction(),
        };
        Ok(())
    })
}
