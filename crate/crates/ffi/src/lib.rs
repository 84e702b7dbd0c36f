//! C ABI over the kemosim library.
//!
//! Every function returns a [`KsStatus`]; on failure the message is kept in a
//! thread-local slot readable with [`ks_last_error_message`]. Handles are
//! opaque and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kemosim::config::parse_config;
use kemosim::hypothesis::{self, InfLocation, ThresholdCase};
use kemosim::motility::{self, CustomTable};
use kemosim::stepper::{self, RunSettings, StepFailure};
use kemosim::{
    Error, Grid, ModelParams, MotilityFamily, RunStatus, ScalarField, State, StepControl,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    NegativeMotility = 4,
    Io = 5,
    BufferTooSmall = 6,
    PositivityLost = 7,
    NonFinite = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsRunStatus {
    Completed = 0,
    BlowUpSuspected = 1,
    DtUnderflow = 2,
    PositivityLost = 3,
}

impl From<RunStatus> for KsRunStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Completed => KsRunStatus::Completed,
            RunStatus::BlowUpSuspected => KsRunStatus::BlowUpSuspected,
            RunStatus::DtUnderflow => KsRunStatus::DtUnderflow,
            RunStatus::PositivityLost => KsRunStatus::PositivityLost,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsInfLocation {
    Interior = 0,
    LowerEndpoint = 1,
    Tail = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KsQInterval {
    pub lower: f64,
    pub upper: f64,
    pub upper_inclusive: bool,
    pub empty: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KsAuditReport {
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub inf_f: f64,
    pub inf_f_v: f64,
    pub inf_f_location: KsInfLocation,
    pub h3_ok: bool,
    pub h3_margin: f64,
    pub tail_f: f64,
    pub tail_slope: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KsThreshold {
    pub inf_f: f64,
    pub bounded_claim: bool,
    /// `true` when the infimum sits at the lower bound of `v`.
    pub strong_decay: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KsExponents {
    pub p: f64,
    pub q: f64,
    pub feasible: bool,
}

/// Motility pair together with `d` and `N`.
pub struct KsModel {
    fam: MotilityFamily,
    params: ModelParams,
}

/// A simulation in progress.
pub struct KsSimulation {
    fam: MotilityFamily,
    params: ModelParams,
    ctrl: StepControl,
    state: State,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> KsStatus {
    match err {
        Error::Config(_) => KsStatus::Config,
        Error::Domain(_) => KsStatus::Domain,
        Error::NegativeMotility { .. } => KsStatus::NegativeMotility,
        Error::Io(_) => KsStatus::Io,
    }
}

fn fail(status: KsStatus, msg: impl Into<String>) -> KsStatus {
    set_last_error(msg);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), KsStatus>) -> KsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            KsStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(KsStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, KsStatus>;
}

impl<T> OrStatus<T> for kemosim::Result<T> {
    fn or_status(self) -> Result<T, KsStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, KsStatus> {
    p.as_ref()
        .ok_or_else(|| fail(KsStatus::NullPointer, format!("{name} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, KsStatus> {
    p.as_mut()
        .ok_or_else(|| fail(KsStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], KsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(KsStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ks_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

fn new_model(fam: MotilityFamily, d: f64, n_dim: usize, out: *mut *mut KsModel) -> KsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(KsStatus::NullPointer, "out is null"));
        }
        fam.validate().or_status()?;
        let params = ModelParams::new(d, n_dim, vec![1.0; n_dim.min(2)]).or_status()?;
        unsafe { *out = Box::into_raw(Box::new(KsModel { fam, params })) };
        Ok(())
    })
}

/// `gamma = 1`, `phi = chi / v`.
///
/// # Safety
/// `out` must be a valid pointer to a `KsModel*`.
#[no_mangle]
pub unsafe extern "C" fn ks_model_new_singular(
    chi: f64,
    d: f64,
    n_dim: usize,
    out: *mut *mut KsModel,
) -> KsStatus {
    new_model(MotilityFamily::Singular { chi }, d, n_dim, out)
}

/// `gamma = sigma / v^lambda`, `phi = (alpha - 1) gamma'`.
///
/// # Safety
/// `out` must be a valid pointer to a `KsModel*`.
#[no_mangle]
pub unsafe extern "C" fn ks_model_new_algebraic(
    sigma: f64,
    lambda: f64,
    alpha: f64,
    d: f64,
    n_dim: usize,
    out: *mut *mut KsModel,
) -> KsStatus {
    new_model(
        MotilityFamily::AlgebraicKs {
            sigma,
            lambda,
            alpha,
        },
        d,
        n_dim,
        out,
    )
}

/// # Safety
/// `out` must be a valid pointer to a `KsModel*`.
#[no_mangle]
pub unsafe extern "C" fn ks_model_new_constant(
    gamma0: f64,
    phi0: f64,
    d: f64,
    n_dim: usize,
    out: *mut *mut KsModel,
) -> KsStatus {
    new_model(MotilityFamily::Constant { gamma0, phi0 }, d, n_dim, out)
}

/// Tabulated pair `(v[i], gamma[i], phi[i])`, `i < n`, interpolated monotonically.
///
/// # Safety
/// `v`, `gamma`, `phi` must each point to `n` readable doubles; `out` must be
/// a valid pointer to a `KsModel*`.
#[no_mangle]
pub unsafe extern "C" fn ks_model_new_custom(
    v: *const f64,
    gamma: *const f64,
    phi: *const f64,
    n: usize,
    d: f64,
    n_dim: usize,
    out: *mut *mut KsModel,
) -> KsStatus {
    let table = (|| -> Result<CustomTable, KsStatus> {
        let (v, g, p) = (
            slice(v, n, "v")?,
            slice(gamma, n, "gamma")?,
            slice(phi, n, "phi")?,
        );
        CustomTable::new(v.to_vec(), g.to_vec(), p.to_vec()).or_status()
    })();
    match table {
        Ok(t) => new_model(MotilityFamily::Custom(t), d, n_dim, out),
        Err(s) => s,
    }
}

/// # Safety
/// `model` must be null or a handle from a `ks_model_new_*` function not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ks_model_free(model: *mut KsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// The weight `F(v)`; `+inf` where its denominator vanishes.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_eval_f(model: *const KsModel, v: f64, out: *mut f64) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        *out = motility::eval_f(&m.fam, &m.params, v).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_coeff_abc(
    model: *const KsModel,
    p: f64,
    v: f64,
    out: *mut KsCoefficients,
) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        let c = motility::coeff_abc(&m.fam, &m.params, p, v).or_status()?;
        *out = KsCoefficients {
            a: c.a,
            b: c.b,
            c: c.c,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_eval_g(
    model: *const KsModel,
    p: f64,
    q: f64,
    v: f64,
    out: *mut f64,
) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        *out = motility::eval_g(&m.fam, &m.params, p, q, v).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_q_interval(
    model: *const KsModel,
    p: f64,
    v: f64,
    out: *mut KsQInterval,
) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        let qi = motility::q_interval(&m.fam, &m.params, p, v).or_status()?;
        *out = KsQInterval {
            lower: qi.lower,
            upper: qi.upper,
            upper_inclusive: qi.upper_inclusive,
            empty: qi.empty,
        };
        Ok(())
    })
}

/// Scans `F` over `[v_min, v_max]`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_audit(
    model: *const KsModel,
    v_min: f64,
    v_max: f64,
    grid_points: usize,
    out: *mut KsAuditReport,
) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        let r = hypothesis::audit(&m.fam, &m.params, v_min, v_max, grid_points).or_status()?;
        let loc = match r.inf_f_location {
            InfLocation::Interior(_) => KsInfLocation::Interior,
            InfLocation::LowerEndpoint(_) => KsInfLocation::LowerEndpoint,
            InfLocation::Tail(_) => KsInfLocation::Tail,
        };
        *out = KsAuditReport {
            h1_ok: r.h1_ok,
            h2_ok: r.h2_ok,
            inf_f: r.inf_f,
            inf_f_v: r.inf_f_location.v(),
            inf_f_location: loc,
            h3_ok: r.h3_ok,
            h3_margin: r.h3_margin,
            tail_f: r.tail_f,
            tail_slope: r.tail_slope,
        };
        Ok(())
    })
}

/// Uniform exponents `(p, q)` for the weighted functional.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_choose_exponents(
    model: *const KsModel,
    v_min: f64,
    v_max: f64,
    grid_points: usize,
    out: *mut KsExponents,
) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        let e = hypothesis::choose_exponents(&m.fam, &m.params, v_min, v_max, grid_points)
            .or_status()?;
        *out = KsExponents {
            p: e.p,
            q: e.q,
            feasible: e.feasible,
        };
        Ok(())
    })
}

/// Closed-form infimum of `F` for the algebraic family over `v >= eta`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_algebraic_threshold(
    sigma: f64,
    lambda: f64,
    alpha: f64,
    d: f64,
    eta: f64,
    n_dim: usize,
    out: *mut KsThreshold,
) -> KsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let t = hypothesis::algebraic_threshold(sigma, lambda, alpha, d, eta, n_dim).or_status()?;
        *out = KsThreshold {
            inf_f: t.inf_f_closed,
            bounded_claim: t.bounded_claim,
            strong_decay: t.case == ThresholdCase::StrongDecay,
        };
        Ok(())
    })
}

/// Starts a simulation on a `cells_x` x `cells_y` grid (`cells_y = 0` for a
/// line) with row-major initial data of length `cells_x * max(cells_y, 1)`.
/// Step control takes its defaults.
///
/// # Safety
/// `model` must be a live handle, `u0`/`v0` must point to `len` doubles and
/// `out` must be a valid pointer to a `KsSimulation*`.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_new(
    model: *const KsModel,
    cells_x: usize,
    cells_y: usize,
    length_x: f64,
    length_y: f64,
    u0: *const f64,
    v0: *const f64,
    len: usize,
    out: *mut *mut KsSimulation,
) -> KsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(fail(KsStatus::NullPointer, "out is null"));
        }
        let grid = if cells_y == 0 {
            Grid::line(cells_x, length_x)
        } else {
            Grid::new(&[cells_x, cells_y], &[length_x, length_y])
        }
        .or_status()?;
        if len != grid.len() {
            return Err(fail(
                KsStatus::BufferTooSmall,
                format!("initial data has {len} values, grid has {}", grid.len()),
            ));
        }
        let u = ScalarField::new(grid, slice(u0, len, "u0")?.to_vec()).or_status()?;
        let v = ScalarField::new(grid, slice(v0, len, "v0")?.to_vec()).or_status()?;
        let params =
            ModelParams::new(m.params.d, m.params.n_dim, grid.lengths().to_vec()).or_status()?;
        let state = State::new(u, v, 0.0).or_status()?;
        *out = Box::into_raw(Box::new(KsSimulation {
            fam: m.fam.clone(),
            params,
            ctrl: StepControl::default(),
            state,
        }));
        Ok(())
    })
}

/// Builds a simulation from a TOML experiment file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer to a `KsSimulation*`.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_new_from_config(
    path: *const c_char,
    out: *mut *mut KsSimulation,
) -> KsStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(fail(KsStatus::NullPointer, "path or out is null"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(KsStatus::Config, "path is not UTF-8"))?;
        let cfg = parse_config(path).or_status()?;
        let sim = KsSimulation {
            fam: cfg.family().or_status()?,
            params: cfg.model_params(),
            ctrl: cfg.step.clone(),
            state: cfg.initial_state().or_status()?,
        };
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_free(sim: *mut KsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances by one stability-limited step; the step size is written to `dt`
/// when it is non-null.
///
/// # Safety
/// `sim` must be a live handle; `dt` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_step(sim: *mut KsSimulation, dt: *mut f64) -> KsStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        match stepper::step(&s.state, &s.fam, &s.params, &s.ctrl) {
            Ok(report) => {
                if !dt.is_null() {
                    *dt = report.dt;
                }
                s.state = report.state;
                Ok(())
            }
            Err(StepFailure::PositivityLost) => {
                Err(fail(KsStatus::PositivityLost, "positivity lost"))
            }
            Err(StepFailure::NonFinite) => Err(fail(KsStatus::NonFinite, "non-finite values")),
            Err(StepFailure::Model(e)) => Err(fail(status_of(&e), e.to_string())),
        }
    })
}

/// Integrates up to `t_end` and reports how the run ended.
///
/// # Safety
/// `sim` must be a live handle and `status` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_run(
    sim: *mut KsSimulation,
    t_end: f64,
    status: *mut KsRunStatus,
) -> KsStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        let status = deref_mut(status, "status")?;
        let settings = RunSettings {
            horizon: t_end,
            sample_every: None,
        };
        let outcome = stepper::run(&s.state, &s.fam, &s.params, &s.ctrl, settings, &mut |_| {})
            .or_status()?;
        *status = outcome.status.into();
        s.state = outcome.final_state;
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_time(sim: *const KsSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.state.t)
}

/// Number of cells.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_len(sim: *const KsSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.state.grid().len())
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), KsStatus> {
    if buf.is_null() {
        return Err(fail(KsStatus::NullPointer, "buffer is null"));
    }
    if len < values.len() {
        return Err(fail(
            KsStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Copies the cell values of `u` into `buf`.
///
/// # Safety
/// `sim` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_copy_u(
    sim: *const KsSimulation,
    buf: *mut f64,
    len: usize,
) -> KsStatus {
    guard(|| copy_out(deref(sim, "sim")?.state.u.values(), buf, len))
}

/// Copies the cell values of `v` into `buf`.
///
/// # Safety
/// `sim` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_copy_v(
    sim: *const KsSimulation,
    buf: *mut f64,
    len: usize,
) -> KsStatus {
    guard(|| copy_out(deref(sim, "sim")?.state.v.values(), buf, len))
}

/// `∫ u`.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_sim_mass(sim: *const KsSimulation, out: *mut f64) -> KsStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        *deref_mut(out, "out")? = kemosim::field::integrate(&s.state.u);
        Ok(())
    })
}
