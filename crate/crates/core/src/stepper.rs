//! Explicit time integration of the coupled system
//!
//! ```text
//! u_t = div(gamma(v) grad u - u phi(v) grad v)
//! v_t = d lap v - v + u
//! ```
//!
//! with a two-stage strong-stability-preserving Heun update, an adaptive
//! stability restriction, a positivity guard and heuristic blow-up flags.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    chemotactic_divergence_with, laplacian_neumann, motility_cells, FluxDiagnostics, ScalarField,
    State,
};
use crate::motility::{ModelParams, MotilityFamily};

/// Relative size (against `sup u`) below which negative `u` is rounding noise.
pub const NEGATIVE_U_TOLERANCE: f64 = 1e-12;
/// Number of dt halvings tried before giving up on positivity.
pub const MAX_POSITIVITY_RETRIES: usize = 20;
/// Window of `sup u` history inspected when dt collapses.
pub const GROWTH_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub cfl_safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub u_blowup_threshold: f64,
    pub v_floor: f64,
    /// Face diffusivity below which a step is counted as degenerate.
    pub gamma_floor: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            cfl_safety: 0.4,
            dt_min: 1e-10,
            dt_max: 0.1,
            u_blowup_threshold: 1e8,
            v_floor: 1e-12,
            gamma_floor: 1e-8,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            errs.push(format!(
                "step.cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            ));
        }
        if !(self.dt_min > 0.0) {
            errs.push(format!("step.dt_min must be positive, got {}", self.dt_min));
        }
        if !(self.dt_max > self.dt_min && self.dt_max.is_finite()) {
            errs.push(format!(
                "step.dt_max must exceed step.dt_min, got dt_min = {}, dt_max = {}",
                self.dt_min, self.dt_max
            ));
        }
        if !(self.u_blowup_threshold > 0.0) {
            errs.push("step.u_blowup_threshold must be positive".to_string());
        }
        if !(self.v_floor > 0.0) {
            errs.push("step.v_floor must be positive".to_string());
        }
        if !(self.gamma_floor >= 0.0) {
            errs.push("step.gamma_floor must be nonnegative".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    BlowUpSuspected,
    DtUnderflow,
    PositivityLost,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "Completed",
            RunStatus::BlowUpSuspected => "BlowUpSuspected",
            RunStatus::DtUnderflow => "DtUnderflow",
            RunStatus::PositivityLost => "PositivityLost",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_state: State,
    pub steps_taken: usize,
    /// Steps whose smallest face diffusivity fell below `gamma_floor`.
    pub degenerate_steps: usize,
}

/// Time derivatives of `(u, v)` and the face statistics of the flux assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub du: ScalarField,
    pub dv: ScalarField,
    pub diagnostics: FluxDiagnostics,
}

pub fn rhs(state: &State, fam: &MotilityFamily, params: &ModelParams) -> Result<Derivatives> {
    let (gamma, phi) = motility_cells(fam, &state.v)?;
    let (du, diagnostics) = chemotactic_divergence_with(state, &gamma, &phi);
    let mut dv = laplacian_neumann(&state.v);
    for ((dvk, &uk), &vk) in dv
        .values_mut()
        .iter_mut()
        .zip(state.u.values())
        .zip(state.v.values())
    {
        *dvk = params.d * *dvk + uk - vk;
    }
    Ok(Derivatives {
        du,
        dv,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableDt {
    pub dt: f64,
    /// The raw bound fell below `dt_min` and was clamped up to it.
    pub underflow: bool,
}

/// `cfl * min(h^2 / (2 dim max(gamma_max, d)), h / max|phi grad v|, dt_max)`.
pub fn stable_dt_from(
    diag: &FluxDiagnostics,
    state: &State,
    params: &ModelParams,
    ctrl: &StepControl,
) -> StableDt {
    let grid = state.grid();
    let h = grid.min_spacing();
    let diffusivity = diag.max_cell_gamma.max(params.d);
    let diffusive = h * h / (2.0 * grid.dim() as f64 * diffusivity);
    let advective = if diag.max_face_velocity > 0.0 {
        h / diag.max_face_velocity
    } else {
        f64::INFINITY
    };
    let dt = ctrl.cfl_safety * diffusive.min(advective).min(ctrl.dt_max);
    if dt < ctrl.dt_min || dt.is_nan() {
        StableDt {
            dt: ctrl.dt_min,
            underflow: true,
        }
    } else {
        StableDt {
            dt,
            underflow: false,
        }
    }
}

pub fn stable_dt(
    state: &State,
    fam: &MotilityFamily,
    params: &ModelParams,
    ctrl: &StepControl,
) -> Result<StableDt> {
    let d = rhs(state, fam, params)?;
    Ok(stable_dt_from(&d.diagnostics, state, params, ctrl))
}

/// `state + dt * derivs` (a forward-Euler stage).
pub fn euler_stage(state: &State, derivs: &Derivatives, dt: f64) -> State {
    let axpy = |x: &ScalarField, dx: &ScalarField| {
        let mut y = x.clone();
        for (yk, &dk) in y.values_mut().iter_mut().zip(dx.values()) {
            *yk += dt * dk;
        }
        y
    };
    State {
        u: axpy(&state.u, &derivs.du),
        v: axpy(&state.v, &derivs.dv),
        t: state.t + dt,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepFailure {
    PositivityLost,
    NonFinite,
    Model(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: State,
    pub dt: f64,
    pub underflow: bool,
    pub retries: usize,
    pub degenerate: bool,
}

/// One Heun step with the stability-limited dt.
pub fn step(
    state: &State,
    fam: &MotilityFamily,
    params: &ModelParams,
    ctrl: &StepControl,
) -> std::result::Result<StepReport, StepFailure> {
    step_capped(state, fam, params, ctrl, f64::INFINITY)
}

/// One Heun step with `dt <= dt_cap`; the result lands exactly on
/// `state.t + dt_cap` when the cap binds.
pub fn step_capped(
    state: &State,
    fam: &MotilityFamily,
    params: &ModelParams,
    ctrl: &StepControl,
    dt_cap: f64,
) -> std::result::Result<StepReport, StepFailure> {
    let k1 = rhs(state, fam, params).map_err(StepFailure::Model)?;
    let bound = stable_dt_from(&k1.diagnostics, state, params, ctrl);
    let degenerate = k1.diagnostics.degenerate(ctrl.gamma_floor);
    let (mut dt, mut land_on_cap) = if dt_cap <= bound.dt {
        (dt_cap, true)
    } else {
        (bound.dt, false)
    };

    for retries in 0..=MAX_POSITIVITY_RETRIES {
        let s1 = euler_stage(state, &k1, dt);
        let k2 = match rhs(&s1, fam, params) {
            Ok(k) => k,
            Err(Error::Domain(_)) => {
                // stage value left the family's domain (v <= 0)
                dt *= 0.5;
                land_on_cap = false;
                continue;
            }
            Err(e) => return Err(StepFailure::Model(e)),
        };
        let s2 = euler_stage(&s1, &k2, dt);
        let combine = |a: &ScalarField, b: &ScalarField| {
            let mut out = a.clone();
            for (o, &bk) in out.values_mut().iter_mut().zip(b.values()) {
                *o = 0.5 * *o + 0.5 * bk;
            }
            out
        };
        let mut u = combine(&state.u, &s2.u);
        let v = combine(&state.v, &s2.v);
        if !(u.all_finite() && v.all_finite()) {
            return Err(StepFailure::NonFinite);
        }
        let sup_u = u.sup_abs();
        if u.min() < -NEGATIVE_U_TOLERANCE * sup_u {
            dt *= 0.5;
            land_on_cap = false;
            continue;
        }
        for x in u.values_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        if v.min() < ctrl.v_floor {
            return Err(StepFailure::PositivityLost);
        }
        let t = if land_on_cap {
            state.t + dt_cap
        } else {
            state.t + dt
        };
        return Ok(StepReport {
            state: State { u, v, t },
            dt,
            underflow: bound.underflow,
            retries,
            degenerate,
        });
    }
    Err(StepFailure::PositivityLost)
}

/// Horizon and monitoring cadence of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub horizon: f64,
    /// Time between monitor samples; `None` samples only the first and last state.
    pub sample_every: Option<f64>,
}

fn growing_monotonically(history: &VecDeque<f64>) -> bool {
    history.len() > GROWTH_WINDOW
        && history
            .iter()
            .zip(history.iter().skip(1))
            .all(|(a, b)| b > a)
}

/// Advances `initial` to the horizon or to the first failure.
///
/// `monitor` sees the initial state, every state at a multiple of
/// `sample_every`, and the final state.
pub fn run(
    initial: &State,
    fam: &MotilityFamily,
    params: &ModelParams,
    ctrl: &StepControl,
    settings: RunSettings,
    monitor: &mut dyn FnMut(&State),
) -> Result<RunOutcome> {
    ctrl.validate()?;
    fam.validate()?;
    params.validate()?;
    if !(settings.horizon > initial.t) || !settings.horizon.is_finite() {
        return Err(Error::Config(vec![format!(
            "run.horizon must exceed the initial time {}, got {}",
            initial.t, settings.horizon
        )]));
    }
    if let Some(every) = settings.sample_every {
        if !(every > 0.0) {
            return Err(Error::Config(vec![
                "run.sample_every must be positive".into()
            ]));
        }
    }

    let mut state = initial.clone();
    let mut steps = 0usize;
    let mut degenerate_steps = 0usize;
    let mut history: VecDeque<f64> = VecDeque::with_capacity(GROWTH_WINDOW + 2);
    let mut next_sample_index = 1u64;
    let mut last_sampled_t = state.t;
    monitor(&state);

    let finish = |status,
                  state: State,
                  steps,
                  degenerate_steps,
                  monitor: &mut dyn FnMut(&State),
                  last: f64| {
        if state.t != last {
            monitor(&state);
        }
        Ok(RunOutcome {
            status,
            final_state: state,
            steps_taken: steps,
            degenerate_steps,
        })
    };

    if state.u.sup_abs() > ctrl.u_blowup_threshold {
        return finish(
            RunStatus::BlowUpSuspected,
            state,
            0,
            0,
            monitor,
            last_sampled_t,
        );
    }

    while state.t < settings.horizon {
        let mut target = settings.horizon;
        let mut is_sample = false;
        if let Some(every) = settings.sample_every {
            let next = initial.t + next_sample_index as f64 * every;
            if next < target {
                target = next;
                is_sample = true;
            } else if next == target {
                is_sample = true;
            }
        }
        let report = match step_capped(&state, fam, params, ctrl, target - state.t) {
            Ok(r) => r,
            Err(StepFailure::NonFinite) => {
                return finish(
                    RunStatus::BlowUpSuspected,
                    state,
                    steps,
                    degenerate_steps,
                    monitor,
                    last_sampled_t,
                )
            }
            Err(StepFailure::PositivityLost) => {
                return finish(
                    RunStatus::PositivityLost,
                    state,
                    steps,
                    degenerate_steps,
                    monitor,
                    last_sampled_t,
                )
            }
            Err(StepFailure::Model(e)) => return Err(e),
        };
        if report.underflow {
            let status = if growing_monotonically(&history) {
                RunStatus::BlowUpSuspected
            } else {
                RunStatus::DtUnderflow
            };
            return finish(
                status,
                state,
                steps,
                degenerate_steps,
                monitor,
                last_sampled_t,
            );
        }
        state = report.state;
        steps += 1;
        if report.degenerate {
            degenerate_steps += 1;
        }
        let sup_u = state.u.sup_abs();
        history.push_back(sup_u);
        if history.len() > GROWTH_WINDOW + 1 {
            history.pop_front();
        }
        if sup_u > ctrl.u_blowup_threshold {
            return finish(
                RunStatus::BlowUpSuspected,
                state,
                steps,
                degenerate_steps,
                monitor,
                last_sampled_t,
            );
        }
        if is_sample && state.t == target {
            next_sample_index += 1;
            monitor(&state);
            last_sampled_t = state.t;
        }
    }
    finish(
        RunStatus::Completed,
        state,
        steps,
        degenerate_steps,
        monitor,
        last_sampled_t,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{integrate, Grid};
    use approx::assert_relative_eq;

    fn params(d: f64) -> ModelParams {
        ModelParams::new(d, 2, vec![1.0, 1.0]).unwrap()
    }

    fn heat() -> MotilityFamily {
        MotilityFamily::Constant {
            gamma0: 1.0,
            phi0: 0.0,
        }
    }

    fn bump_state(grid: &Grid) -> State {
        let c = grid.lengths().iter().map(|l| 0.5 * l).collect::<Vec<_>>();
        let u = grid.field_from_fn(|x| {
            let r2: f64 = (0..grid.dim()).map(|k| (x[k] - c[k]).powi(2)).sum();
            1.0 + 2.0 * (-r2 / 0.05).exp()
        });
        State::new(u, grid.constant(1.0), 0.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let g = Grid::square(8, 1.0).unwrap();
        let fam = MotilityFamily::Singular { chi: 0.5 };
        let s = State::new(g.constant(1.3), g.constant(1.3), 0.0).unwrap();
        let r = rhs(&s, &fam, &params(1.0)).unwrap();
        assert!(r.du.values().iter().chain(r.dv.values()).all(|&x| x == 0.0));

        let s = State::new(g.constant(2.0), g.constant(1.0), 0.0).unwrap();
        let r = rhs(&s, &fam, &params(1.0)).unwrap();
        assert!(r.du.values().iter().all(|&x| x == 0.0));
        assert!(r.dv.values().iter().all(|&x| x == 1.0));

        let s = bump_state(&g);
        let r = rhs(&s, &fam, &params(1.0)).unwrap();
        assert!(integrate(&r.du).abs() < 1e-13);
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid::line(10, 1.0).unwrap();
        let s = State::new(g.constant(1.0), g.constant(1.0), 0.0).unwrap();
        let ctrl = StepControl::default();
        let dt = stable_dt(&s, &heat(), &params(1.0), &ctrl).unwrap();
        assert_relative_eq!(dt.dt, 0.002, max_relative = 1e-14);
        assert!(!dt.underflow);

        let ctrl_big = StepControl {
            dt_max: 10.0,
            ..StepControl::default()
        };
        let g2 = Grid::line(5, 1.0).unwrap();
        let s2 = State::new(g2.constant(1.0), g2.constant(1.0), 0.0).unwrap();
        let dt2 = stable_dt(&s2, &heat(), &params(1.0), &ctrl_big).unwrap();
        let dt1 = stable_dt(&s, &heat(), &params(1.0), &ctrl_big).unwrap();
        assert_relative_eq!(dt2.dt / dt1.dt, 4.0, max_relative = 1e-12);

        let nearly_degenerate = MotilityFamily::Constant {
            gamma0: 1e-9,
            phi0: 0.0,
        };
        let dt3 = stable_dt(&s, &nearly_degenerate, &params(1.0), &ctrl).unwrap();
        assert_relative_eq!(dt3.dt, 0.002, max_relative = 1e-14);

        let tiny = StepControl {
            dt_min: 0.01,
            ..StepControl::default()
        };
        let dt4 = stable_dt(&s, &heat(), &params(1.0), &tiny).unwrap();
        assert!(dt4.underflow);
        assert_eq!(dt4.dt, 0.01);
    }

    #[test]
    fn euler_stage_by_hand() {
        let g = Grid::line(8, 1.0).unwrap();
        let s = State::new(g.constant(2.0), g.constant(1.0), 0.0).unwrap();
        let r = rhs(&s, &heat(), &params(1.0)).unwrap();
        let s1 = euler_stage(&s, &r, 0.1);
        for &v in s1.v.values() {
            assert_relative_eq!(v, 1.1, max_relative = 1e-15);
        }
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let g = Grid::square(8, 1.0).unwrap();
        let s = State::new(g.constant(1.0), g.constant(1.0), 0.0).unwrap();
        let r = step(
            &s,
            &MotilityFamily::Singular { chi: 0.5 },
            &params(1.0),
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(r.state.u, s.u);
        assert_eq!(r.state.v, s.v);
        assert!(r.state.t > 0.0);
    }

    #[test]
    fn run_to_horizon_and_sample_on_cadence() {
        let g = Grid::line(16, 1.0).unwrap();
        let s = State::new(g.constant(1.0), g.constant(1.0), 0.0).unwrap();
        let mut times = Vec::new();
        let out = run(
            &s,
            &MotilityFamily::Singular { chi: 0.5 },
            &params(1.0),
            &StepControl::default(),
            RunSettings {
                horizon: 10.0,
                sample_every: Some(2.5),
            },
            &mut |st: &State| times.push(st.t),
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.final_state.u, s.u);
        assert_eq!(out.final_state.v, s.v);
        assert_eq!(out.final_state.t, 10.0);
        assert_eq!(times, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn blowup_threshold_trips_at_step_zero() {
        let g = Grid::line(8, 1.0).unwrap();
        let s = State::new(g.constant(2.0), g.constant(1.0), 0.0).unwrap();
        let ctrl = StepControl {
            u_blowup_threshold: 1.0,
            ..StepControl::default()
        };
        let out = run(
            &s,
            &heat(),
            &params(1.0),
            &ctrl,
            RunSettings {
                horizon: 1.0,
                sample_every: None,
            },
            &mut |_| {},
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::BlowUpSuspected);
        assert_eq!(out.steps_taken, 0);
    }

    #[test]
    fn invalid_control_rejected_before_stepping() {
        let g = Grid::line(8, 1.0).unwrap();
        let s = State::new(g.constant(1.0), g.constant(1.0), 0.0).unwrap();
        let ctrl = StepControl {
            cfl_safety: 1.5,
            ..StepControl::default()
        };
        let mut called = false;
        let r = run(
            &s,
            &heat(),
            &params(1.0),
            &ctrl,
            RunSettings {
                horizon: 1.0,
                sample_every: None,
            },
            &mut |_| called = true,
        );
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(!called);
    }

    #[test]
    fn dt_underflow_is_reported() {
        let g = Grid::line(64, 1.0).unwrap();
        let s = bump_state(&g);
        let ctrl = StepControl {
            dt_min: 1e-3,
            dt_max: 1.0,
            ..StepControl::default()
        };
        let out = run(
            &s,
            &heat(),
            &params(1.0),
            &ctrl,
            RunSettings {
                horizon: 1.0,
                sample_every: None,
            },
            &mut |_| {},
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::DtUnderflow);
    }

    #[test]
    fn mass_is_conserved_and_v_stays_above_comparison_bound() {
        let g = Grid::square(24, 1.0).unwrap();
        let s = bump_state(&g);
        let fam = MotilityFamily::Singular { chi: 0.5 };
        let m0 = integrate(&s.u);
        let v0_min = s.v.min();
        let mut state = s.clone();
        for _ in 0..2000 {
            let r = step(&state, &fam, &params(1.0), &StepControl::default()).unwrap();
            state = r.state;
            let bound = v0_min * (-state.t).exp() * (1.0 - 10.0 * r.dt);
            assert!(state.v.min() >= bound);
            assert!(state.u.min() >= 0.0);
        }
        assert!((integrate(&state.u) - m0).abs() <= 1e-12 * m0);
    }
}
