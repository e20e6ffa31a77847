//! C ABI for the `infoot` crate.
//!
//! Matrices cross the boundary as row-major `double` buffers. Every entry
//! point returns an [`InfootStatus`]; on failure the message is available
//! from [`infoot_last_error`] on the same thread. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use infoot::error::InfoOtError;
use infoot::kernels::{KdeModel, PointSet};
use infoot::projection::{barycentric_project, conditional_project, Queries};
use infoot::sinkhorn::{sinkhorn, CouplingMatrix, SinkhornSettings};
use infoot::solver::{mutual_information, solve_fused_infoot_with_model, SolverConfig};
use ndarray::{Array1, Array2, ArrayView2};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfootStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Degenerate = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Fused solver settings; start from [`infoot_solver_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfootSolverConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub outer_iters: usize,
    pub outer_tol: f64,
    pub inner_max_iter: usize,
    pub inner_tol: f64,
}

/// KDE model over a source and target point cloud, plus the target
/// coordinates used by the projections.
pub struct InfootModel {
    model: KdeModel,
    target: PointSet,
}

/// A feasible transport plan with its solver diagnostics.
pub struct InfootCoupling {
    coupling: CouplingMatrix,
    converged: bool,
    iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn fail(status: InfootStatus, message: impl Into<String>) -> InfootStatus {
    set_error(message.into());
    status
}

fn from_error(err: InfoOtError) -> InfootStatus {
    let status = match err {
        InfoOtError::DimensionMismatch(_) => InfootStatus::DimensionMismatch,
        InfoOtError::NonFinite(_) => InfootStatus::NonFinite,
        InfoOtError::Degenerate(_) => InfootStatus::Degenerate,
        InfoOtError::InvalidInput(_)
        | InfoOtError::Spec(_)
        | InfoOtError::OutOfSampleUnsupported => InfootStatus::InvalidInput,
        InfoOtError::Io(_) | InfoOtError::Csv(_) => InfootStatus::Internal,
    };
    fail(status, err.to_string())
}

fn guard(body: impl FnOnce() -> Result<(), InfootStatus>) -> InfootStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => InfootStatus::Ok,
        Ok(Err(status)) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(InfootStatus::Internal, format!("panic: {message}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, InfootStatus>;
}

impl<T> OrStatus<T> for infoot::error::Result<T> {
    fn or_status(self) -> Result<T, InfootStatus> {
        self.map_err(from_error)
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), InfootStatus> {
    if p.is_null() {
        Err(fail(InfootStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `data` must point to `rows * cols` readable doubles.
unsafe fn matrix(
    data: *const f64,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<Array2<f64>, InfootStatus> {
    non_null(data, what)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| fail(InfootStatus::InvalidInput, format!("{what} size overflows")))?;
    let slice = std::slice::from_raw_parts(data, len);
    Ok(ArrayView2::from_shape((rows, cols), slice)
        .expect("length checked")
        .to_owned())
}

/// # Safety
/// `data` is null or points to `len` readable doubles.
unsafe fn marginal(data: *const f64, len: usize) -> Option<Array1<f64>> {
    if data.is_null() {
        None
    } else {
        Some(Array1::from(std::slice::from_raw_parts(data, len).to_vec()))
    }
}

fn uniform(len: usize) -> Array1<f64> {
    Array1::from_elem(len, 1.0 / len as f64)
}

/// # Safety
/// `out` must point to `capacity` writable doubles.
unsafe fn write_out(
    values: &Array2<f64>,
    out: *mut f64,
    capacity: usize,
) -> Result<(), InfootStatus> {
    non_null(out, "output buffer")?;
    if capacity < values.len() {
        return Err(fail(
            InfootStatus::BufferTooSmall,
            format!(
                "output needs {} doubles, buffer holds {capacity}",
                values.len()
            ),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(out, values.len());
    for (d, v) in dst.iter_mut().zip(values.iter()) {
        *d = *v;
    }
    Ok(())
}

/// # Safety
/// `slot` must be a writable pointer.
unsafe fn emit<T>(slot: *mut *mut T, value: T) {
    *slot = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn infoot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn infoot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults: λ = 100, ε = 1, 50 outer iterations, outer tolerance 1e-6.
#[no_mangle]
pub extern "C" fn infoot_solver_config_default() -> InfootSolverConfig {
    let cfg = SolverConfig::default();
    InfootSolverConfig {
        lambda: cfg.lambda,
        epsilon: cfg.epsilon,
        outer_iters: cfg.outer_iters,
        outer_tol: cfg.outer_tol,
        inner_max_iter: cfg.inner.max_iter,
        inner_tol: cfg.inner.tol,
    }
}

/// Builds a KDE model from `n × dim` source and `m × dim` target points with
/// relative bandwidth `bandwidth`.
///
/// # Safety
/// `source` and `target` must point to `n * dim` and `m * dim` readable
/// doubles; `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn infoot_model_new(
    source: *const f64,
    n: usize,
    target: *const f64,
    m: usize,
    dim: usize,
    bandwidth: f64,
    out: *mut *mut InfootModel,
) -> InfootStatus {
    guard(|| {
        non_null(out, "out")?;
        let source = PointSet::new(matrix(source, n, dim, "source")?).or_status()?;
        let target = PointSet::new(matrix(target, m, dim, "target")?).or_status()?;
        let model = KdeModel::from_points(&source, &target, bandwidth).or_status()?;
        emit(out, InfootModel { model, target });
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` is null or came from [`infoot_model_new`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn infoot_model_free(model: *mut InfootModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Kernelized mutual information of an `n × m` plan under `model`.
///
/// # Safety
/// `model` must be live, `plan` must point to `n * m` readable doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infoot_mutual_information(
    model: *const InfootModel,
    plan: *const f64,
    out: *mut f64,
) -> InfootStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let model = &(*model).model;
        let plan = matrix(plan, model.n(), model.m(), "plan")?;
        *out = mutual_information(model, plan.view()).or_status()?;
        Ok(())
    })
}

/// Entropic OT on an `n × m` cost. Null `p` or `q` means uniform. Hitting
/// `max_iter` still returns a plan, flagged as not converged.
///
/// # Safety
/// `cost` must point to `n * m` readable doubles, non-null `p` and `q` to
/// `n` and `m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infoot_sinkhorn(
    cost: *const f64,
    n: usize,
    m: usize,
    p: *const f64,
    q: *const f64,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    out: *mut *mut InfootCoupling,
) -> InfootStatus {
    guard(|| {
        non_null(out, "out")?;
        let cost = matrix(cost, n, m, "cost")?;
        let p = marginal(p, n).unwrap_or_else(|| uniform(n));
        let q = marginal(q, m).unwrap_or_else(|| uniform(m));
        let settings = SinkhornSettings { max_iter, tol };
        let (coupling, report) = sinkhorn(cost.view(), &p, &q, epsilon, &settings).or_status()?;
        emit(
            out,
            InfootCoupling {
                coupling,
                converged: report.converged,
                iterations: report.iterations,
            },
        );
        Ok(())
    })
}

/// Fused InfoOT `min ⟨Γ, C⟩ − λ Î(Γ)` on the model's points with uniform
/// marginals. Null `config` uses the defaults.
///
/// # Safety
/// `model` must be live, `cost` must point to `n * m` readable doubles,
/// `config` is null or readable, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infoot_solve_fused(
    model: *const InfootModel,
    cost: *const f64,
    config: *const InfootSolverConfig,
    out: *mut *mut InfootCoupling,
) -> InfootStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let model = &(*model).model;
        let (n, m) = (model.n(), model.m());
        let cost = matrix(cost, n, m, "cost")?;
        let c = if config.is_null() {
            infoot_solver_config_default()
        } else {
            *config
        };
        let cfg = SolverConfig {
            lambda: c.lambda,
            epsilon: c.epsilon,
            bandwidth: model.bandwidth(),
            outer_iters: c.outer_iters,
            outer_tol: c.outer_tol,
            inner: SinkhornSettings {
                max_iter: c.inner_max_iter,
                tol: c.inner_tol,
            },
            ..SolverConfig::default()
        };
        let r = solve_fused_infoot_with_model(cost.view(), model, &uniform(n), &uniform(m), &cfg)
            .or_status()?;
        let iterations = r.iterations();
        emit(
            out,
            InfootCoupling {
                coupling: r.coupling,
                converged: r.converged,
                iterations,
            },
        );
        Ok(())
    })
}

/// Releases a coupling; null is ignored.
///
/// # Safety
/// `coupling` is null or came from this library and was not freed.
#[no_mangle]
pub unsafe extern "C" fn infoot_coupling_free(coupling: *mut InfootCoupling) {
    if !coupling.is_null() {
        drop(Box::from_raw(coupling));
    }
}

/// Shape of the plan.
///
/// # Safety
/// `coupling` must be live; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infoot_coupling_shape(
    coupling: *const InfootCoupling,
    rows: *mut usize,
    cols: *mut usize,
) -> InfootStatus {
    guard(|| {
        non_null(coupling, "coupling")?;
        non_null(rows, "rows")?;
        non_null(cols, "cols")?;
        let (n, m) = (*coupling).coupling.dim();
        *rows = n;
        *cols = m;
        Ok(())
    })
}

/// Copies the plan, row-major, into `out`.
///
/// # Safety
/// `coupling` must be live and `out` must point to `capacity` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn infoot_coupling_copy(
    coupling: *const InfootCoupling,
    out: *mut f64,
    capacity: usize,
) -> InfootStatus {
    guard(|| {
        non_null(coupling, "coupling")?;
        write_out((*coupling).coupling.values(), out, capacity)
    })
}

/// Whether the solve met its stopping rule, and the iterations it took.
///
/// # Safety
/// `coupling` must be live; `converged` and `iterations` are null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn infoot_coupling_status(
    coupling: *const InfootCoupling,
    converged: *mut bool,
    iterations: *mut usize,
) -> InfootStatus {
    guard(|| {
        non_null(coupling, "coupling")?;
        let c = &*coupling;
        if !converged.is_null() {
            *converged = c.converged;
        }
        if !iterations.is_null() {
            *iterations = c.iterations;
        }
        Ok(())
    })
}

/// Barycentric projection of every source point: `n × dim` doubles.
///
/// # Safety
/// `model` and `coupling` must be live and `out` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn infoot_project_barycentric(
    model: *const InfootModel,
    coupling: *const InfootCoupling,
    out: *mut f64,
    capacity: usize,
) -> InfootStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(coupling, "coupling")?;
        let projected =
            barycentric_project((*coupling).coupling.view(), &(*model).target).or_status()?;
        write_out(&projected, out, capacity)
    })
}

/// Conditional projection of `count × dim` query points, or of every
/// source point when `queries` is null. A nonpositive `bandwidth` reuses
/// the model's.
///
/// # Safety
/// `model` and `coupling` must be live, non-null `queries` must point to
/// `count * dim` readable doubles, and `out` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn infoot_project_conditional(
    model: *const InfootModel,
    coupling: *const InfootCoupling,
    queries: *const f64,
    count: usize,
    bandwidth: f64,
    out: *mut f64,
    capacity: usize,
) -> InfootStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(coupling, "coupling")?;
        let InfootModel { model, target } = &*model;
        let queries = if queries.is_null() {
            Queries::all(model.n())
        } else {
            Queries::Points(matrix(queries, count, target.dim(), "queries")?)
        };
        let h = (bandwidth > 0.0).then_some(bandwidth);
        let projected =
            conditional_project(model, (*coupling).coupling.view(), &queries, target, h)
                .or_status()?;
        write_out(&projected, out, capacity)
    })
}
