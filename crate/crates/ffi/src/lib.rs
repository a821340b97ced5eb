//! C ABI over `vilab`.
//!
//! Problems and traces are opaque heap handles created by `vilab_*` functions
//! and released with the matching `*_free`. Every fallible function returns a
//! [`VilabStatus`]; on failure a message is available from
//! [`vilab_last_error`] on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vilab::adaptive::compute_c;
use vilab::metrics::estimate_weak_minty_params;
use vilab::problems::{self, MatrixGameKind, MatrixGameSpec, Plant};
use vilab::sdp::{solve_certificate, SdpInstance};
use vilab::{solvers, SolverConfig, StopReason, Trace, VIError, VIProblem};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VilabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// Matrix-game families accepted by [`vilab_problem_matrix_game`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VilabGameKind {
    Random = 0,
    PolicemanBurglar = 1,
    TestMatrix = 2,
}

/// Why a run stopped.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VilabStop {
    MaxIters = 0,
    GradTol = 1,
    Diverged = 2,
    NonFinite = 3,
}

/// One recorded trace row. Unavailable metrics are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct VilabRow {
    pub iter: u64,
    pub fevals: u64,
    pub alpha: f64,
    pub grad_norm: f64,
    pub min_grad_norm_sq: f64,
    pub gap: f64,
    pub dist: f64,
    pub wall_ms: f64,
}

/// Opaque problem handle.
pub struct VilabProblem {
    inner: VIProblem,
}

/// Opaque trace handle.
pub struct VilabTrace {
    inner: Trace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &VIError) -> VilabStatus {
    match err {
        VIError::Config { .. } | VIError::Parse(_) => VilabStatus::Config,
        VIError::NonFinite(_) | VIError::NoIterates => VilabStatus::Numerical,
        VIError::Io(_) => VilabStatus::Io,
        _ => VilabStatus::InvalidArgument,
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), (VilabStatus, String)>) -> VilabStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VilabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            VilabStatus::Panic
        }
    }
}

fn lift<T>(r: vilab::Result<T>) -> Result<T, (VilabStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null_err(what: &str) -> (VilabStatus, String) {
    (VilabStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn emit_problem(p: vilab::Result<VIProblem>, out: *mut *mut VilabProblem) -> VilabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let inner = lift(p)?;
        *out = Box::into_raw(Box::new(VilabProblem { inner }));
        Ok(())
    })
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vilab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vilab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_polar(a: f64, out: *mut *mut VilabProblem) -> VilabStatus {
    emit_problem(problems::make_polar_game(a), out)
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_forsaken(out: *mut *mut VilabProblem) -> VilabStatus {
    emit_problem(problems::make_forsaken(), out)
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_lower_bound(a: f64, b: f64, out: *mut *mut VilabProblem) -> VilabStatus {
    emit_problem(problems::make_lower_bound(a, b), out)
}

/// `kind` is a `VilabGameKind` value; `theta` is used only by the
/// policeman-burglar kind.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_matrix_game(
    kind: u32,
    d: usize,
    seed: u64,
    theta: f64,
    out: *mut *mut VilabProblem,
) -> VilabStatus {
    let kind = match kind {
        k if k == VilabGameKind::Random as u32 => MatrixGameKind::Random,
        k if k == VilabGameKind::PolicemanBurglar as u32 => MatrixGameKind::PolicemanBurglar { theta },
        k if k == VilabGameKind::TestMatrix as u32 => MatrixGameKind::TestMatrix,
        other => {
            set_error(format!("unknown game kind {other}"));
            return VilabStatus::InvalidArgument;
        }
    };
    emit_problem(problems::make_matrix_game(&MatrixGameSpec::new(kind, d, seed)), out)
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_qp(
    d: usize,
    seed: u64,
    planted: bool,
    out: *mut *mut VilabProblem,
) -> VilabStatus {
    let plant = if planted { Plant::Random } else { Plant::None };
    emit_problem(problems::make_qp_lagrangian(d, plant, seed), out)
}

/// Dimension of the problem, or 0 for a NULL handle.
///
/// # Safety
/// `p` must be NULL or a live handle from a `vilab_problem_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_dim(p: *const VilabProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.dim())
}

/// # Safety
/// `p` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vilab_problem_free(p: *mut VilabProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs a solver configured by a TOML table (e.g. `algorithm = "agraal"`,
/// `phi = 1.2`, `max_iters = 1000`). A NULL config uses the defaults.
///
/// # Safety
/// `problem` must be a live handle, `config_toml` NULL or a NUL-terminated
/// string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vilab_run(
    problem: *const VilabProblem,
    config_toml: *const c_char,
    out: *mut *mut VilabTrace,
) -> VilabStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let cfg = if config_toml.is_null() {
            SolverConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|_| (VilabStatus::InvalidArgument, "config is not UTF-8".to_string()))?;
            lift(SolverConfig::from_toml(text))?
        };
        let inner = lift(solvers::run(&p.inner, &cfg))?;
        *out = Box::into_raw(Box::new(VilabTrace { inner }));
        Ok(())
    })
}

/// Number of recorded rows, or 0 for a NULL handle.
///
/// # Safety
/// `t` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn vilab_trace_len(t: *const VilabTrace) -> usize {
    t.as_ref().map_or(0, |t| t.inner.rows.len())
}

/// # Safety
/// `t` must be a live trace handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vilab_trace_row(t: *const VilabTrace, index: usize, out: *mut VilabRow) -> VilabStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null_err("trace"))?;
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        let r = t
            .inner
            .rows
            .get(index)
            .ok_or_else(|| (VilabStatus::InvalidArgument, format!("row {index} out of range")))?;
        *out = VilabRow {
            iter: r.iter as u64,
            fevals: r.fevals,
            alpha: r.alpha,
            grad_norm: r.grad_norm,
            min_grad_norm_sq: r.min_grad_norm_sq,
            gap: r.gap.unwrap_or(f64::NAN),
            dist: r.dist.unwrap_or(f64::NAN),
            wall_ms: r.wall_ms,
        };
        Ok(())
    })
}

/// # Safety
/// `t` must be a live trace handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vilab_trace_stop(t: *const VilabTrace, out: *mut VilabStop) -> VilabStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null_err("trace"))?;
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        *out = match t.inner.stop {
            StopReason::MaxIters => VilabStop::MaxIters,
            StopReason::GradTol => VilabStop::GradTol,
            StopReason::Diverged => VilabStop::Diverged,
            StopReason::NonFinite => VilabStop::NonFinite,
        };
        Ok(())
    })
}

/// Copies the final iterate into `buf`, which must hold `len` doubles with
/// `len` equal to the problem dimension.
///
/// # Safety
/// `t` must be a live trace handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn vilab_trace_final_point(t: *const VilabTrace, buf: *mut f64, len: usize) -> VilabStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null_err("trace"))?;
        if buf.is_null() {
            return Err(null_err("buf"));
        }
        let z = t.inner.final_point.as_slice();
        if z.len() != len {
            return Err((VilabStatus::InvalidArgument, format!("buffer holds {len} values, point has {}", z.len())));
        }
        ptr::copy_nonoverlapping(z.as_ptr(), buf, len);
        Ok(())
    })
}

/// Writes the trace CSV to `path`.
///
/// # Safety
/// `t` must be a live trace handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vilab_trace_write_csv(t: *const VilabTrace, path: *const c_char) -> VilabStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null_err("trace"))?;
        if path.is_null() {
            return Err(null_err("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (VilabStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let file = std::fs::File::create(path).map_err(|e| (VilabStatus::Io, e.to_string()))?;
        lift(t.inner.write_csv(std::io::BufWriter::new(file)))
    })
}

/// # Safety
/// `t` must be NULL or a live trace handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vilab_trace_free(t: *mut VilabTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Solves the certificate program with diagonal caps `cap` on the last two
/// entries. Writes the optimum to `value` and, if `g` is not NULL, the
/// attaining matrix row-major into `g[0..9]`.
///
/// # Safety
/// `value` must be writable; `g` NULL or valid for 9 writes.
#[no_mangle]
pub unsafe extern "C" fn vilab_sdp_certificate(cap: f64, tol: f64, value: *mut f64, g: *mut f64) -> VilabStatus {
    guard(|| {
        let value = value.as_mut().ok_or_else(|| null_err("value"))?;
        let cert = lift(solve_certificate(&SdpInstance::certificate(cap), tol))?;
        *value = cert.value;
        if !g.is_null() {
            let flat: Vec<f64> = cert.g.iter().flatten().copied().collect();
            ptr::copy_nonoverlapping(flat.as_ptr(), g, 9);
        }
        Ok(())
    })
}

/// Grid estimate of `L` and `rho` on `[lo, hi]^2` with `n` nodes per axis.
///
/// # Safety
/// `problem` must be a live handle; `lipschitz` and `rho` writable.
#[no_mangle]
pub unsafe extern "C" fn vilab_estimate_wm(
    problem: *const VilabProblem,
    lo: f64,
    hi: f64,
    n: usize,
    lipschitz: *mut f64,
    rho: *mut f64,
) -> VilabStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        let l_out = lipschitz.as_mut().ok_or_else(|| null_err("lipschitz"))?;
        let r_out = rho.as_mut().ok_or_else(|| null_err("rho"))?;
        let est = lift(estimate_weak_minty_params(&p.inner, lo, hi, n))?;
        *l_out = est.lipschitz;
        *r_out = est.rho;
        Ok(())
    })
}

/// The constant `c` of the aGRAAL step-sum bound.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vilab_compute_c(phi: f64, gamma: f64, out: *mut f64) -> VilabStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        *out = lift(compute_c(phi, gamma))?;
        Ok(())
    })
}
