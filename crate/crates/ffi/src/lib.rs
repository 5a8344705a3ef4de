//! C ABI for the fitwave library.
//!
//! Every fallible function returns a status code (`FW_OK` on success) and
//! writes results through out-pointers. Objects are opaque handles created
//! by `fw_*` constructors and released with the matching `*_free`. After a
//! failure, `fw_last_error_message` describes it.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fitwave::engine::NoHook;
use fitwave::renewal::RenewalError;
use fitwave::{run, solve_q, theory, EngineKind, ModelParams, RunSchedule, TheoryCurves, Trajectory};

pub const FW_OK: i32 = 0;
pub const FW_INVALID_ARGUMENT: i32 = 1;
pub const FW_OUT_OF_RANGE: i32 = 2;
pub const FW_NULL_POINTER: i32 = 3;
pub const FW_NOT_FOUND: i32 = 4;
pub const FW_INTERNAL: i32 = 5;

pub const FW_ENGINE_FAITHFUL: i32 = 0;
pub const FW_ENGINE_EFFECTIVE: i32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(code: i32, msg: impl Into<String>) -> i32 {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    code
}

/// Runs `f`, turning panics into `FW_INTERNAL`.
fn guard(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(FW_INTERNAL, "internal error"),
    }
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FwScales {
    pub a_n: f64,
    pub k_n: f64,
    pub k_n_minus: f64,
    pub k_n_plus: f64,
    pub k_star: u32,
    pub t_star: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub df_width: f64,
    pub df_speed: f64,
    pub rbw_speed: f64,
    pub speed: f64,
}

fn params(n: u64, mu: f64, s: f64) -> Result<ModelParams, i32> {
    ModelParams::new(n, mu, s).map_err(|e| fail(FW_INVALID_ARGUMENT, e.to_string()))
}

/// Scales and predictions for `(n, mu, s)`; needs `0 < mu < s < 1`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `FwScales`.
#[no_mangle]
pub unsafe extern "C" fn fw_scales(n: u64, mu: f64, s: f64, out: *mut FwScales) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(FW_NULL_POINTER, "out is null");
        }
        let p = match params(n, mu, s) {
            Ok(p) => p,
            Err(code) => return code,
        };
        let (sc, pr) = match (theory::scales(&p), theory::predictions(&p)) {
            (Ok(sc), Ok(pr)) => (sc, pr),
            (Err(e), _) | (_, Err(e)) => return fail(FW_INVALID_ARGUMENT, e.to_string()),
        };
        *out = FwScales {
            a_n: sc.a_n,
            k_n: sc.k_n,
            k_n_minus: sc.k_n_minus,
            k_n_plus: sc.k_n_plus,
            k_star: sc.k_star,
            t_star: sc.t_star,
            a1: sc.assumptions.a1,
            a2: sc.assumptions.a2,
            a3: sc.assumptions.a3,
            df_width: pr.df_width,
            df_speed: pr.df_speed,
            rbw_speed: pr.rbw_speed,
            speed: pr.speed,
        };
        FW_OK
    })
}

/// Stream seed of replicate `index` under `master`.
#[no_mangle]
pub extern "C" fn fw_seed_for_replicate(master: u64, index: u64) -> u64 {
    fitwave::rng::seed_for_replicate(master, index)
}

/// Solved limit curves `q` and `m`.
pub struct FwCurves(TheoryCurves);

/// Solves the renewal equation with step `h` (1/h must be an integer) up
/// to `t_max`.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_solve_q(h: f64, t_max: f64, out: *mut *mut FwCurves) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(FW_NULL_POINTER, "out is null");
        }
        *out = ptr::null_mut();
        match solve_q(h, t_max) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(FwCurves(c)));
                FW_OK
            }
            Err(e) => fail(FW_INVALID_ARGUMENT, e.to_string()),
        }
    })
}

unsafe fn curve_value(
    curves: *const FwCurves,
    t: f64,
    out: *mut f64,
    f: fn(&TheoryCurves, f64) -> Result<f64, RenewalError>,
) -> i32 {
    guard(|| {
        if curves.is_null() || out.is_null() {
            return fail(FW_NULL_POINTER, "null argument");
        }
        match f(&(*curves).0, t) {
            Ok(v) => {
                *out = v;
                FW_OK
            }
            Err(e) => fail(FW_OUT_OF_RANGE, e.to_string()),
        }
    })
}

/// `q(t)`, linearly interpolated between grid points.
///
/// # Safety
/// `curves` must come from `fw_solve_q`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fw_curves_q_at(curves: *const FwCurves, t: f64, out: *mut f64) -> i32 {
    curve_value(curves, t, out, TheoryCurves::q_at)
}

/// `m(t)`, linearly interpolated between grid points.
///
/// # Safety
/// `curves` must come from `fw_solve_q`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fw_curves_m_at(curves: *const FwCurves, t: f64, out: *mut f64) -> i32 {
    curve_value(curves, t, out, TheoryCurves::m_at)
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `curves` must be null or come from `fw_solve_q`.
#[no_mangle]
pub unsafe extern "C" fn fw_curves_len(curves: *const FwCurves) -> usize {
    if curves.is_null() {
        0
    } else {
        (*curves).0.len()
    }
}

/// # Safety
/// `curves` must be null or come from `fw_solve_q`, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fw_curves_free(curves: *mut FwCurves) {
    if !curves.is_null() {
        drop(Box::from_raw(curves));
    }
}

/// One simulated replicate.
pub struct FwTrajectory(Trajectory);

/// Simulates one replicate from the all-type-0 population up to `t_end`,
/// with `snapshots` evenly spaced snapshots (at least 2) and establishment
/// times recorded.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_simulate(
    n: u64,
    mu: f64,
    s: f64,
    t_end: f64,
    snapshots: usize,
    engine: i32,
    seed: u64,
    out: *mut *mut FwTrajectory,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(FW_NULL_POINTER, "out is null");
        }
        *out = ptr::null_mut();
        let p = match params(n, mu, s) {
            Ok(p) => p,
            Err(code) => return code,
        };
        let engine = match engine {
            FW_ENGINE_FAITHFUL => EngineKind::Faithful,
            FW_ENGINE_EFFECTIVE => EngineKind::Effective,
            other => return fail(FW_INVALID_ARGUMENT, format!("unknown engine {other}")),
        };
        let sched = match RunSchedule::uniform(t_end, snapshots) {
            Ok(s) => s.with_threshold_watch(true),
            Err(e) => return fail(FW_INVALID_ARGUMENT, e.to_string()),
        };
        match run(&p, &sched, engine, seed, &mut NoHook) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(FwTrajectory(t)));
                FW_OK
            }
            Err(e) => fail(FW_INVALID_ARGUMENT, e.to_string()),
        }
    })
}

/// # Safety
/// `traj` must be null or come from `fw_simulate`.
#[no_mangle]
pub unsafe extern "C" fn fw_trajectory_snapshot_count(traj: *const FwTrajectory) -> usize {
    if traj.is_null() {
        0
    } else {
        (*traj).0.snapshots.len()
    }
}

/// Total number of events, null replacements included.
///
/// # Safety
/// `traj` must be null or come from `fw_simulate`.
#[no_mangle]
pub unsafe extern "C" fn fw_trajectory_events(traj: *const FwTrajectory) -> u64 {
    if traj.is_null() {
        0
    } else {
        (*traj).0.counters.total
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FwSnapshot {
    pub time: f64,
    pub mean: f64,
    pub front_lead: f64,
    pub j_min: u32,
    pub j_max: u32,
}

/// Summary of snapshot `index`.
///
/// # Safety
/// `traj` must come from `fw_simulate`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fw_trajectory_snapshot(traj: *const FwTrajectory, index: usize, out: *mut FwSnapshot) -> i32 {
    guard(|| {
        if traj.is_null() || out.is_null() {
            return fail(FW_NULL_POINTER, "null argument");
        }
        let traj = &(*traj).0;
        let Some(s) = traj.snapshots.get(index) else {
            return fail(FW_OUT_OF_RANGE, format!("snapshot {index} out of range"));
        };
        *out = FwSnapshot { time: s.time, mean: s.mean(), front_lead: s.front_lead(), j_min: s.j_min, j_max: s.j_max() };
        FW_OK
    })
}

/// Count of type `j` in snapshot `index` (0 outside the occupied band).
///
/// # Safety
/// `traj` must come from `fw_simulate`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fw_trajectory_count(traj: *const FwTrajectory, index: usize, j: u32, out: *mut u64) -> i32 {
    guard(|| {
        if traj.is_null() || out.is_null() {
            return fail(FW_NULL_POINTER, "null argument");
        }
        let traj = &(*traj).0;
        let Some(s) = traj.snapshots.get(index) else {
            return fail(FW_OUT_OF_RANGE, format!("snapshot {index} out of range"));
        };
        *out = s.count(j);
        FW_OK
    })
}

/// Establishment time `tau_j`; `FW_NOT_FOUND` if it was never reached.
///
/// # Safety
/// `traj` must come from `fw_simulate`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fw_trajectory_tau(traj: *const FwTrajectory, j: u32, out: *mut f64) -> i32 {
    guard(|| {
        if traj.is_null() || out.is_null() {
            return fail(FW_NULL_POINTER, "null argument");
        }
        match (*traj).0.tau(j) {
            Some(t) => {
                *out = t;
                FW_OK
            }
            None => fail(FW_NOT_FOUND, format!("tau_{j} not recorded")),
        }
    })
}

/// # Safety
/// `traj` must be null or come from `fw_simulate`, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fw_trajectory_free(traj: *mut FwTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}
