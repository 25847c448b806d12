//! C interface to `chb-core`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns a status code; on failure
//! the message is available from [`chb_last_error`] on the same thread.
//! Controls and fields are flat row-major `double` buffers: a field has
//! `nx * ny` entries with `x` fastest, a control has `nt` such slabs.
//! Gradients are `L²` densities: `⟨∇J, h⟩ = τ hx hy Σ ∇J · h`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use chb_core::app::{ProblemBundle, ProblemConfig};
use chb_core::discretization::ScalarField;
use chb_core::forward::StateTrajectory;
use chb_core::objective::ControlField;
use chb_core::optimize::projected_gradient_descent;
use chb_core::ChbError;

pub const CHB_OK: i32 = 0;
pub const CHB_ERR_NULL: i32 = 1;
pub const CHB_ERR_CONFIG: i32 = 2;
pub const CHB_ERR_INVALID: i32 = 3;
pub const CHB_ERR_SOLVER: i32 = 4;
pub const CHB_ERR_IO: i32 = 5;
pub const CHB_ERR_BUFFER: i32 = 6;
pub const CHB_ERR_PANIC: i32 = 7;
/// `chb_optimize` stopped before reaching the tolerance; outputs are valid.
pub const CHB_NOT_CONVERGED: i32 = 8;

/// Snapshot field selector for [`chb_trajectory_field`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChbField {
    Phi = 0,
    Mu = 1,
    Sigma = 2,
    Pressure = 3,
}

/// Validated problem built from a configuration.
pub struct ChbProblem {
    bundle: ProblemBundle,
}

/// Forward solution `(φ, μ, σ, v, p)` at `t⁰ … t^N`.
pub struct ChbTrajectory {
    traj: StateTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code(e: &ChbError) -> i32 {
    match e {
        ChbError::Config { .. } => CHB_ERR_CONFIG,
        ChbError::Io { .. } => CHB_ERR_IO,
        ChbError::NotConverged { .. }
        | ChbError::SingularSystem { .. }
        | ChbError::StepFailed { .. }
        | ChbError::LineSearchFailed { .. } => CHB_ERR_SOLVER,
        _ => CHB_ERR_INVALID,
    }
}

struct Fail(i32, String);

impl From<ChbError> for Fail {
    fn from(e: ChbError) -> Self {
        Fail(code(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<i32, Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(c)) => c,
        Ok(Err(Fail(c, msg))) => {
            set_error(&msg);
            c
        }
        Err(_) => {
            set_error("internal panic");
            CHB_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CHB_ERR_NULL, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CHB_ERR_INVALID, format!("{what} is not valid UTF-8")))
}

unsafe fn problem_ref<'a>(p: *const ChbProblem) -> Result<&'a ChbProblem, Fail> {
    p.as_ref().ok_or_else(|| null("problem"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, want: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(Fail(CHB_ERR_BUFFER, format!("{what} has length {len}, expected {want}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(Fail(CHB_ERR_BUFFER, format!("{what} has length {len}, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

impl ChbProblem {
    fn cells(&self) -> usize {
        self.bundle.problem.grid().num_cells()
    }

    fn control_len(&self) -> usize {
        self.cells() * self.bundle.problem.time().nt()
    }

    /// `u == NULL` selects the configured initial control.
    unsafe fn control(&self, u: *const f64, len: usize) -> Result<ControlField, Fail> {
        if u.is_null() {
            return Ok(self.bundle.u0.clone());
        }
        let data = slice(u, len, self.control_len(), "control")?;
        let grid = *self.bundle.problem.grid();
        let slabs = data
            .chunks(self.cells())
            .map(|c| ScalarField::new(grid, c.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ControlField::new(*self.bundle.problem.time(), slabs)?)
    }
}

fn flatten(u: &ControlField, out: &mut [f64]) {
    for (dst, slab) in out.chunks_mut(u.grid().num_cells()).zip(u.slabs()) {
        dst.copy_from_slice(slab.values());
    }
}

fn publish(bundle: ProblemBundle, out: *mut *mut ChbProblem) -> i32 {
    unsafe { *out = Box::into_raw(Box::new(ChbProblem { bundle })) };
    CHB_OK
}

/// Parses an INI configuration held in memory. `file:` presets are resolved
/// against the current directory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chb_problem_from_config_str(text: *const c_char, out: *mut *mut ChbProblem) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = c_str(text, "text")?;
        let bundle = ProblemConfig::parse(text, "<string>", PathBuf::from("."))?.build()?;
        Ok(publish(bundle, out))
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chb_problem_from_config_file(path: *const c_char, out: *mut *mut ChbProblem) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        let bundle = ProblemConfig::from_file(Path::new(path))?.build()?;
        Ok(publish(bundle, out))
    })
}

/// # Safety
/// `p` must be null or a handle from `chb_problem_from_config_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chb_problem_free(p: *mut ChbProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Writes the cell counts and the number of time steps.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chb_problem_dims(p: *const ChbProblem, nx: *mut usize, ny: *mut usize, nt: *mut usize) -> i32 {
    guard(|| {
        let p = problem_ref(p)?;
        if nx.is_null() || ny.is_null() || nt.is_null() {
            return Err(null("dims output"));
        }
        let g = p.bundle.problem.grid();
        *nx = g.nx();
        *ny = g.ny();
        *nt = p.bundle.problem.time().nt();
        Ok(CHB_OK)
    })
}

/// Solves the state system for `u` (`nt * nx * ny` values, or NULL for the
/// configured control).
///
/// # Safety
/// `p` must be a live handle, `u` null or `len` readable doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn chb_solve_forward(
    p: *const ChbProblem,
    u: *const f64,
    len: usize,
    out: *mut *mut ChbTrajectory,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = problem_ref(p)?;
        let u = p.control(u, len)?;
        let traj = p.bundle.problem.forward(&u)?;
        *out = Box::into_raw(Box::new(ChbTrajectory { traj }));
        Ok(CHB_OK)
    })
}

/// # Safety
/// `t` must be null or a handle from `chb_solve_forward` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chb_trajectory_free(t: *mut ChbTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Copies one cell field of snapshot `step` (`0 ≤ step ≤ nt`) into `buf`.
///
/// # Safety
/// `t` must be a live handle and `buf` hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chb_trajectory_field(
    t: *const ChbTrajectory,
    field: ChbField,
    step: usize,
    buf: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("trajectory"))?;
        let snap = t.traj.snapshots.get(step).ok_or_else(|| {
            Fail(
                CHB_ERR_INVALID,
                format!("step {step} out of range 0..={}", t.traj.snapshots.len() - 1),
            )
        })?;
        let f = match field {
            ChbField::Phi => &snap.phi,
            ChbField::Mu => &snap.mu,
            ChbField::Sigma => &snap.sigma,
            ChbField::Pressure => &snap.p,
        };
        slice_mut(buf, len, f.values().len(), "buffer")?.copy_from_slice(f.values());
        Ok(CHB_OK)
    })
}

/// Evaluates `J(u)` and its gradient (`nt * nx * ny` values) by the adjoint.
/// `grad` may be NULL when only the cost is wanted.
///
/// # Safety
/// `p` must be a live handle and all non-null buffers sized as stated.
#[no_mangle]
pub unsafe extern "C" fn chb_cost_and_gradient(
    p: *const ChbProblem,
    u: *const f64,
    len: usize,
    cost: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> i32 {
    guard(|| {
        let p = problem_ref(p)?;
        if cost.is_null() {
            return Err(null("cost"));
        }
        let u = p.control(u, len)?;
        if grad.is_null() {
            *cost = p.bundle.problem.cost(&u)?;
            return Ok(CHB_OK);
        }
        let out = slice_mut(grad, grad_len, p.control_len(), "gradient")?;
        let eval = p.bundle.problem.evaluate(&u)?;
        flatten(&eval.gradient, out);
        *cost = eval.cost;
        Ok(CHB_OK)
    })
}

/// Projected gradient descent from `u0` (NULL for the configured control)
/// with the configured options. Writes the final control, cost and
/// iteration count; returns `CHB_NOT_CONVERGED` if the tolerance was not met.
///
/// # Safety
/// `p` must be a live handle and all buffers sized as stated.
#[no_mangle]
pub unsafe extern "C" fn chb_optimize(
    p: *const ChbProblem,
    u0: *const f64,
    len: usize,
    u_out: *mut f64,
    out_len: usize,
    cost: *mut f64,
    iterations: *mut usize,
    converged: *mut c_int,
) -> i32 {
    guard(|| {
        let p = problem_ref(p)?;
        if cost.is_null() || iterations.is_null() || converged.is_null() {
            return Err(null("optimize output"));
        }
        let out = slice_mut(u_out, out_len, p.control_len(), "u_out")?;
        let u0 = p.control(u0, len)?;
        let res = projected_gradient_descent(&p.bundle.problem, &u0, &p.bundle.config.optimize)
            .map_err(|f| Fail(code(&f.error), f.to_string()))?;
        flatten(&res.u_opt, out);
        *cost = res.eval.cost;
        *iterations = res.history.len().saturating_sub(1);
        *converged = c_int::from(res.converged);
        Ok(if res.converged { CHB_OK } else { CHB_NOT_CONVERGED })
    })
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn chb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
