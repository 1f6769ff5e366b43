//! C ABI for the racetrack library.
//!
//! Conventions:
//! * every fallible function returns a [`RacetrackStatus`]; results are
//!   written through out-pointers only on success;
//! * grids and solvers are opaque handles created by `*_new` and released by
//!   the matching `*_free` (which accepts NULL);
//! * after a failure, [`racetrack_last_error`] describes it. The message is
//!   per thread and stays valid until the next failing call on that thread;
//! * panics never cross the boundary, they are reported as
//!   [`RacetrackStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use racetrack::dynamics::{count_spikes, random_initial, run_to_stationary, SimulationConfig, SpikeOptions};
use racetrack::equilibrium::{EquilibriumSolver, PopulationField, SolverOptions};
use racetrack::spectral::{critical_points, mode_growth, CrossingStatus, ScanSpec};
use racetrack::{Error, ErrorKind, Grid, ModelParams};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RacetrackStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A parameter or size violated its documented bounds.
    Config = 2,
    /// A numerical procedure failed (non-convergence, non-finite values, ...).
    Numerical = 3,
    /// An output buffer has the wrong length.
    BufferSize = 4,
    /// An internal error; the library state is unchanged.
    Panic = 5,
}

/// Model parameters, passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacetrackParams {
    pub mu: f64,
    pub sigma: f64,
    pub eta: f64,
    pub tau_a: f64,
    pub tau_m: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl From<RacetrackParams> for ModelParams {
    fn from(p: RacetrackParams) -> Self {
        ModelParams {
            mu: p.mu,
            sigma: p.sigma,
            eta: p.eta,
            tau_a: p.tau_a,
            tau_m: p.tau_m,
            rho: p.rho,
            gamma: p.gamma,
        }
    }
}

impl From<ModelParams> for RacetrackParams {
    fn from(p: ModelParams) -> Self {
        RacetrackParams {
            mu: p.mu,
            sigma: p.sigma,
            eta: p.eta,
            tau_a: p.tau_a,
            tau_m: p.tau_m,
            rho: p.rho,
            gamma: p.gamma,
        }
    }
}

/// Growth rate of one Fourier mode of the uniform state and its parts.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RacetrackSpectral {
    pub n: i64,
    pub h_alpha: f64,
    pub h_beta: f64,
    pub b: f64,
    pub d: f64,
    pub big_b: f64,
    pub q: f64,
    pub omega: f64,
    pub eigenvalue: f64,
}

/// Critical manufacturing transport costs of one mode. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RacetrackCritical {
    pub lower: f64,
    pub upper: f64,
    /// 0: no crossing, 1: single, 2: pair, 3: more than two.
    pub status: i32,
}

/// Summary of a simulation run to its stationary state.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RacetrackRunSummary {
    pub steps: usize,
    /// 1 when the stop criterion was met, 0 when `max_steps` was reached.
    pub converged: i32,
    pub spikes: usize,
    pub max_mass_drift: f64,
}

/// Opaque discretized circle.
pub struct RacetrackGrid(Grid);

/// Opaque equilibrium solver bound to one grid and parameter set.
pub struct RacetrackSolver {
    solver: EquilibriumSolver,
    grid: Grid,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(e: &Error) -> RacetrackStatus {
    match e.kind() {
        ErrorKind::Config => RacetrackStatus::Config,
        // nothing exposed here touches the file system
        ErrorKind::Numerical | ErrorKind::Io => RacetrackStatus::Numerical,
    }
}

enum Failure {
    Status(RacetrackStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(RacetrackStatus::NullPointer, format!("`{what}` is NULL"))
}

fn wrong_len(what: &str, expected: usize, actual: usize) -> Failure {
    Failure::Status(
        RacetrackStatus::BufferSize,
        format!("`{what}` has length {actual}, expected {expected}"),
    )
}

/// Run `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RacetrackStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RacetrackStatus::Ok,
        Ok(Err(Failure::Status(status, message))) => {
            set_last_error(message);
            status
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal error (panic)".into());
            RacetrackStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or valid for reads of `len` values.
unsafe fn slice_in<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be NULL or valid for writes of `len` values.
unsafe fn slice_out<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// Message describing the last failure on this thread, or NULL if none.
#[no_mangle]
pub extern "C" fn racetrack_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn racetrack_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Baseline parameters: mu 0.5, sigma 3, eta 2, tau_a 2, tau_m 4, rho 1, gamma 1.
#[no_mangle]
pub extern "C" fn racetrack_params_default() -> RacetrackParams {
    ModelParams::default().into()
}

/// Check every parameter bound.
///
/// # Safety
/// `params` must be NULL or point to a valid `RacetrackParams`.
#[no_mangle]
pub unsafe extern "C" fn racetrack_params_validate(params: *const RacetrackParams) -> RacetrackStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        ModelParams::from(*p).validate()?;
        Ok(())
    })
}

/// Growth rate of mode `n` of the uniform state.
///
/// # Safety
/// `params` must point to a valid `RacetrackParams` and `out` to writable
/// memory for one `RacetrackSpectral`.
#[no_mangle]
pub unsafe extern "C" fn racetrack_mode_growth(
    n: i64,
    params: *const RacetrackParams,
    out: *mut RacetrackSpectral,
) -> RacetrackStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = mode_growth(n, &ModelParams::from(*p))?;
        *out = RacetrackSpectral {
            n: r.n,
            h_alpha: r.h_alpha,
            h_beta: r.h_beta,
            b: r.b,
            d: r.d,
            big_b: r.big_b,
            q: r.q,
            omega: r.omega,
            eigenvalue: r.eigenvalue,
        };
        Ok(())
    })
}

/// Critical `tau_m` values of mode `n` on the default scan (1e-3 to 20,
/// 400 geometric points, bisection to 1e-8). `params->tau_m` is ignored.
///
/// # Safety
/// `params` must point to a valid `RacetrackParams` and `out` to writable
/// memory for one `RacetrackCritical`.
#[no_mangle]
pub unsafe extern "C" fn racetrack_critical_points(
    n: i64,
    params: *const RacetrackParams,
    out: *mut RacetrackCritical,
) -> RacetrackStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = critical_points(n, &ModelParams::from(*p), &ScanSpec::default())?;
        *out = RacetrackCritical {
            lower: c.lower.unwrap_or(f64::NAN),
            upper: c.upper.unwrap_or(f64::NAN),
            status: match c.status {
                CrossingStatus::None => 0,
                CrossingStatus::Single => 1,
                CrossingStatus::Pair => 2,
                CrossingStatus::Anomalous => 3,
            },
        };
        Ok(())
    })
}

/// Create a grid of `nodes` points (even, at least 4) on a circle of radius
/// `radius`.
///
/// # Safety
/// `out` must point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn racetrack_grid_new(
    nodes: usize,
    radius: f64,
    out: *mut *mut RacetrackGrid,
) -> RacetrackStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = Grid::new(nodes, radius)?;
        *out = Box::into_raw(Box::new(RacetrackGrid(grid)));
        Ok(())
    })
}

/// Release a grid. NULL is ignored.
///
/// # Safety
/// `grid` must be NULL or a handle from `racetrack_grid_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn racetrack_grid_free(grid: *mut RacetrackGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `grid` must be NULL or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn racetrack_grid_len(grid: *const RacetrackGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Copy the node angles into `out`, which must hold exactly the grid length.
///
/// # Safety
/// `grid` must be a live grid handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn racetrack_grid_angles(
    grid: *const RacetrackGrid,
    out: *mut f64,
    len: usize,
) -> RacetrackStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.0;
        if len != g.len() {
            return Err(wrong_len("out", g.len(), len));
        }
        slice_out(out, len, "out")?.copy_from_slice(g.angles());
        Ok(())
    })
}

/// Create an equilibrium solver with default options for `grid` and
/// `params`. The radius of the grid must equal `params->rho`.
///
/// # Safety
/// `grid` must be a live grid handle, `params` a valid pointer and `out`
/// writable for one pointer.
#[no_mangle]
pub unsafe extern "C" fn racetrack_solver_new(
    grid: *const RacetrackGrid,
    params: *const RacetrackParams,
    out: *mut *mut RacetrackSolver,
) -> RacetrackStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.0;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let solver = EquilibriumSolver::new(g, &ModelParams::from(*p), SolverOptions::default())?;
        *out = Box::into_raw(Box::new(RacetrackSolver {
            solver,
            grid: g.clone(),
        }));
        Ok(())
    })
}

/// Release a solver. NULL is ignored.
///
/// # Safety
/// `solver` must be NULL or a handle from `racetrack_solver_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn racetrack_solver_free(solver: *mut RacetrackSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Solve the instantaneous equilibrium for the worker density `lambda`
/// (unit mass) with uniform farmers, writing the real wage of
/// manufacturing workers into `real_wage`. Both arrays hold `len` values,
/// which must equal the grid length. `iterations` may be NULL.
///
/// # Safety
/// `solver` must be a live handle; `lambda` and `real_wage` valid for `len`
/// values; `iterations` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn racetrack_solver_solve(
    solver: *const RacetrackSolver,
    lambda: *const f64,
    real_wage: *mut f64,
    len: usize,
    iterations: *mut usize,
) -> RacetrackStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        if len != s.grid.len() {
            return Err(wrong_len("lambda", s.grid.len(), len));
        }
        let lambda = PopulationField::new(&s.grid, slice_in(lambda, len, "lambda")?.to_vec())?;
        let out = slice_out(real_wage, len, "real_wage")?;
        let phi = PopulationField::uniform(&s.grid);
        let eq = s.solver.solve(&lambda, &phi, None)?;
        out.copy_from_slice(&eq.real_wage);
        if let Some(it) = iterations.as_mut() {
            *it = eq.iterations;
        }
        Ok(())
    })
}

/// Run the migration dynamics from a seeded random perturbation of
/// relative size `amplitude` with the default time step (0.01) and stop
/// rule, writing the final density into `lambda_out` (grid length) and a
/// summary into `summary`.
///
/// # Safety
/// `grid` must be a live handle, `params` valid, `lambda_out` writable for
/// `len` values and `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn racetrack_simulate(
    grid: *const RacetrackGrid,
    params: *const RacetrackParams,
    seed: u64,
    amplitude: f64,
    max_steps: usize,
    lambda_out: *mut f64,
    len: usize,
    summary: *mut RacetrackRunSummary,
) -> RacetrackStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.0;
        let p = ModelParams::from(*params.as_ref().ok_or_else(|| null("params"))?);
        let summary = summary.as_mut().ok_or_else(|| null("summary"))?;
        if len != g.len() {
            return Err(wrong_len("lambda_out", g.len(), len));
        }
        let out = slice_out(lambda_out, len, "lambda_out")?;
        let config = SimulationConfig {
            max_steps,
            snapshot_every: 0,
            ..SimulationConfig::default()
        };
        let lambda0 = random_initial(seed, amplitude, g)?;
        let run = run_to_stationary(&lambda0, &PopulationField::uniform(g), &p, g, &config)?;
        out.copy_from_slice(run.lambda.values());
        *summary = RacetrackRunSummary {
            steps: run.steps,
            converged: run.converged as i32,
            spikes: run.spikes.count,
            max_mass_drift: run.max_mass_drift,
        };
        Ok(())
    })
}

/// Count spikes of a density sampled on a circular grid with the default
/// rule (peaks at least 10% of the maximum, above `uniform`, merged when at
/// most two nodes apart).
///
/// # Safety
/// `values` must be valid for `len` reads and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn racetrack_count_spikes(
    values: *const f64,
    len: usize,
    uniform: f64,
    count: *mut usize,
) -> RacetrackStatus {
    guard(|| {
        let v = slice_in(values, len, "values")?;
        let count = count.as_mut().ok_or_else(|| null("count"))?;
        *count = count_spikes(v, uniform, &SpikeOptions::default()).count;
        Ok(())
    })
}
