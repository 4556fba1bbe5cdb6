//! C ABI over `ymflow`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns a [`YmfStatus`]; on failure
//! [`ymf_last_error`] describes the most recent error on the calling thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ymflow::field::snapshot::{Snapshot, SnapshotError};
use ymflow::field::{Connection, Lattice};
use ymflow::flow::{self, FlowConfig, FlowError, FlowState, Scheme, TimeStep, Variant};
use ymflow::gauge::{coulomb_fix, GaugeFixConfig};
use ymflow::harness::InitialData;
use ymflow::lie::Group;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YmfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Flow = 5,
    Singular = 6,
    Gauge = 7,
    Panic = 8,
}

/// Opaque connection handle.
pub struct YmfConnection(Connection);

/// Opaque flow-state handle.
pub struct YmfFlow(FlowState);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let s = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ymf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

type Res<T> = Result<T, (YmfStatus, String)>;

fn guard(f: impl FnOnce() -> Res<()>) -> YmfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => YmfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            YmfStatus::Panic
        }
    }
}

fn null(what: &str) -> (YmfStatus, String) {
    (YmfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl ToString) -> (YmfStatus, String) {
    (YmfStatus::InvalidArgument, msg.to_string())
}

fn snapshot_err(e: SnapshotError) -> (YmfStatus, String) {
    match e {
        SnapshotError::Io(e) => (YmfStatus::Io, e.to_string()),
        SnapshotError::Format(m) => (YmfStatus::Format, m),
    }
}

fn flow_err(e: FlowError) -> (YmfStatus, String) {
    match e {
        FlowError::Singular { .. } => (YmfStatus::Singular, e.to_string()),
        FlowError::Cfl { .. } | FlowError::Config(_) => (YmfStatus::InvalidArgument, e.to_string()),
        _ => (YmfStatus::Flow, e.to_string()),
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Res<&'a Path> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn out_arg<T>(out: *mut *mut T, value: T) -> Res<()> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, v: T) -> Res<()> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = v;
    Ok(())
}

unsafe fn conn<'a>(c: *const YmfConnection) -> Res<&'a Connection> {
    c.as_ref().map(|c| &c.0).ok_or_else(|| null("connection"))
}

/// Reads a connection snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_connection_load(path: *const c_char, out: *mut *mut YmfConnection) -> YmfStatus {
    guard(|| {
        let p = path_arg(path)?;
        let a = Snapshot::load(p).and_then(Snapshot::into_connection).map_err(snapshot_err)?;
        out_arg(out, YmfConnection(a))
    })
}

/// Writes a connection snapshot.
///
/// # Safety
/// `c` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ymf_connection_save(c: *const YmfConnection, path: *const c_char) -> YmfStatus {
    guard(|| {
        let a = conn(c)?;
        let p = path_arg(path)?;
        Snapshot::Connection(a.clone()).save(p).map_err(snapshot_err)
    })
}

/// Band-limited random connection. `group_rank` is 1 (U(1)) or 2 (SU(2)).
///
/// # Safety
/// `extents` must point to `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_connection_random_smooth(
    dim: u32,
    extents: *const u32,
    spacing: f64,
    group_rank: u32,
    seed: u64,
    band: u32,
    amplitude: f64,
    out: *mut *mut YmfConnection,
) -> YmfStatus {
    guard(|| {
        if extents.is_null() {
            return Err(null("extents"));
        }
        if !(2..=4).contains(&dim) {
            return Err(invalid(format!("dimension {dim} unsupported")));
        }
        let ext: Vec<usize> = std::slice::from_raw_parts(extents, dim as usize).iter().map(|&e| e as usize).collect();
        let lat = Lattice::new(&ext, spacing).map_err(invalid)?;
        let group = Group::from_rank(group_rank as usize).ok_or_else(|| invalid(format!("group rank {group_rank}")))?;
        let init = InitialData::RandomSmooth {
            seed,
            band: band as usize,
            amplitude,
        };
        let a = init.generate(lat, group).map_err(invalid)?;
        out_arg(out, YmfConnection(a))
    })
}

/// Yang-Mills energy `½‖F‖²`.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_connection_energy(c: *const YmfConnection, out: *mut f64) -> YmfStatus {
    guard(|| write(out, flow::energy(conn(c)?)))
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ymf_connection_free(c: *mut YmfConnection) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Starts a flow from a copy of `a0`. `variant`: 0 raw, 1 DeTurck.
/// `scheme`: 0 Euler, 1 RK4. `dt <= 0` selects the automatic step.
///
/// # Safety
/// `a0` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_flow_new(
    a0: *const YmfConnection,
    variant: u32,
    scheme: u32,
    dt: f64,
    t_end: f64,
    out: *mut *mut YmfFlow,
) -> YmfStatus {
    guard(|| {
        let a = conn(a0)?.clone();
        let variant = match variant {
            0 => Variant::Raw,
            1 => Variant::DeTurck,
            v => return Err(invalid(format!("variant {v}"))),
        };
        let scheme = match scheme {
            0 => Scheme::Euler,
            1 => Scheme::Rk4,
            s => return Err(invalid(format!("scheme {s}"))),
        };
        let cfg = FlowConfig {
            variant,
            scheme,
            dt: if dt > 0.0 { TimeStep::Fixed(dt) } else { TimeStep::Auto },
            t_end,
            ..FlowConfig::default()
        };
        let st = FlowState::new(a, cfg).map_err(flow_err)?;
        out_arg(out, YmfFlow(st))
    })
}

/// Advances `n` steps. On a singular stop the state keeps the last good step.
///
/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ymf_flow_step(f: *mut YmfFlow, n: u32) -> YmfStatus {
    guard(|| {
        let st = &mut f.as_mut().ok_or_else(|| null("flow"))?.0;
        for _ in 0..n {
            st.step().map_err(flow_err)?;
        }
        Ok(())
    })
}

unsafe fn flow_ref<'a>(f: *const YmfFlow) -> Res<&'a FlowState> {
    f.as_ref().map(|f| &f.0).ok_or_else(|| null("flow"))
}

/// # Safety
/// `f` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_flow_time(f: *const YmfFlow, out: *mut f64) -> YmfStatus {
    guard(|| write(out, flow_ref(f)?.time()))
}

/// # Safety
/// `f` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_flow_energy(f: *const YmfFlow, out: *mut f64) -> YmfStatus {
    guard(|| write(out, flow_ref(f)?.energy()))
}

/// Copy of the current raw-flow connection as a new handle.
///
/// # Safety
/// `f` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_flow_connection(f: *const YmfFlow, out: *mut *mut YmfConnection) -> YmfStatus {
    guard(|| {
        let a = flow_ref(f)?.raw_connection().map_err(flow_err)?;
        out_arg(out, YmfConnection(a))
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ymf_flow_free(f: *mut YmfFlow) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Global Coulomb gauge fix on the torus. `iterations` and `residual` may
/// be null.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ymf_coulomb_fix(
    c: *const YmfConnection,
    tol: f64,
    max_iters: u32,
    out: *mut *mut YmfConnection,
    iterations: *mut u32,
    residual: *mut f64,
) -> YmfStatus {
    guard(|| {
        let a = conn(c)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = GaugeFixConfig {
            tol,
            max_iters: max_iters as usize,
            ..GaugeFixConfig::default()
        };
        cfg.validate().map_err(invalid)?;
        let fix = coulomb_fix(a, &cfg).map_err(|e| (YmfStatus::Gauge, e.to_string()))?;
        if !iterations.is_null() {
            *iterations = fix.report.iterations as u32;
        }
        if !residual.is_null() {
            *residual = fix.report.final_residual();
        }
        out_arg(out, YmfConnection(fix.a))
    })
}
