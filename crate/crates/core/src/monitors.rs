//! Functionals tracked along a run and residuals of the evolution relations
//! for `∫ u^p v^q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{integrate, integrate_with, lp_norm, max_face_gradient, pairwise_sum, State};
use crate::motility::{ModelParams, MotilityFamily};

/// Default constant in the inequality tolerance `C (h^2 + dt) scale`.
pub const INEQUALITY_TOL_CONSTANT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub mass_u: f64,
    pub int_v: f64,
    pub min_v: f64,
    pub min_gamma: f64,
    pub sup_u: f64,
    pub sup_grad_v: f64,
    pub lp_u: Vec<f64>,
    /// `∫ u^p v^{-q}`.
    pub w: f64,
    /// NaN on the first record of a run.
    pub ineq_residual: f64,
    /// NaN on the first record of a run.
    pub identity_residual: f64,
}

fn check_signal(state: &State) -> Result<()> {
    let m = state.v.min();
    if !(m > 0.0) {
        return Err(Error::domain(format!(
            "signal must be positive, min v = {m}"
        )));
    }
    Ok(())
}

/// `∫ u^a v^b` by the midpoint rule.
fn power_integral(state: &State, a: f64, b: f64) -> f64 {
    let u = state.u.values();
    let v = state.v.values();
    integrate_with(state.grid(), u.len(), |k| u[k].powf(a) * v[k].powf(b))
}

/// `∫ u^p v^{-q}`.
pub fn weighted_functional(state: &State, p: f64, q: f64) -> Result<f64> {
    check_signal(state)?;
    Ok(power_integral(state, p, -q))
}

/// Forward-difference slack in `d/dt W <= q W - q ∫ u^{p+1} v^{-q-1}`,
/// evaluated at the later state; `(t_prev, w_prev)` is the earlier sample.
pub fn inequality_residual(t_prev: f64, w_prev: f64, state: &State, p: f64, q: f64) -> Result<f64> {
    let dt = state.t - t_prev;
    if !(dt > 0.0) {
        return Err(Error::domain(format!(
            "samples must advance in time, dt = {dt}"
        )));
    }
    let w = weighted_functional(state, p, q)?;
    let drain = power_integral(state, p + 1.0, -q - 1.0);
    Ok((w - w_prev) / dt - (q * w - q * drain))
}

/// Tolerance for [`inequality_residual`] on a grid of spacing `h` sampled every `dt`.
pub fn inequality_tolerance(h: f64, dt: f64, scale: f64) -> f64 {
    INEQUALITY_TOL_CONSTANT * (h * h + dt) * scale
}

/// Right-hand side of the evolution identity for `∫ u^a v^b`:
///
/// ```text
///  - a(a-1) ∫ u^{a-2} v^b gamma |grad u|^2
///  + ∫ u^a v^{b-2} [a b v phi - d b (b-1)] |grad v|^2
///  + ∫ a u^{a-1} v^{b-1} [(a-1) v phi - b gamma - d b] grad u . grad v
///  + b ∫ u^a v^{b-1} (u - v)
/// ```
///
/// Gradient terms use face differences with face-averaged weights; the
/// reaction term uses the cell midpoint rule.
pub fn identity_rhs(
    state: &State,
    a: f64,
    b: f64,
    fam: &MotilityFamily,
    params: &ModelParams,
) -> Result<f64> {
    check_signal(state)?;
    let grid = *state.grid();
    let h = grid.spacing().to_vec();
    let u = state.u.values();
    let v = state.v.values();
    let d = params.d;
    let n = u.len();
    let mut gamma = Vec::with_capacity(n);
    let mut vphi = Vec::with_capacity(n);
    for &vk in v {
        gamma.push(fam.gamma(vk)?);
        vphi.push(fam.phi_bar(vk)?);
    }

    let c1 = -a * (a - 1.0);
    let w1: Vec<f64> = if c1 != 0.0 {
        (0..n)
            .map(|k| u[k].powf(a - 2.0) * v[k].powf(b) * gamma[k])
            .collect()
    } else {
        vec![0.0; n]
    };
    let w2: Vec<f64> = (0..n)
        .map(|k| {
            let c = a * b * vphi[k] - d * b * (b - 1.0);
            if c == 0.0 {
                0.0
            } else {
                u[k].powf(a) * v[k].powf(b - 2.0) * c
            }
        })
        .collect();
    let w3: Vec<f64> = (0..n)
        .map(|k| {
            let c = (a - 1.0) * vphi[k] - b * gamma[k] - d * b;
            if c == 0.0 || a == 0.0 {
                0.0
            } else {
                a * u[k].powf(a - 1.0) * v[k].powf(b - 1.0) * c
            }
        })
        .collect();

    let mut face_terms = Vec::new();
    grid.for_each_face(|l, r, axis| {
        let gu = (u[r] - u[l]) / h[axis];
        let gv = (v[r] - v[l]) / h[axis];
        let t1 = c1 * 0.5 * (w1[l] + w1[r]) * gu * gu;
        let t2 = 0.5 * (w2[l] + w2[r]) * gv * gv;
        let t3 = 0.5 * (w3[l] + w3[r]) * gu * gv;
        face_terms.push(t1 + t2 + t3);
    });
    let gradient_part = pairwise_sum(&face_terms) * grid.cell_volume();
    let reaction = if b == 0.0 {
        0.0
    } else {
        b * integrate_with(&grid, n, |k| {
            u[k].powf(a) * v[k].powf(b - 1.0) * (u[k] - v[k])
        })
    };
    Ok(gradient_part + reaction)
}

/// Two-point time derivative of `∫ u^a v^b` minus the trapezoidal average of
/// [`identity_rhs`] at the two states.
pub fn identity_residual(
    prev: &State,
    state: &State,
    a: f64,
    b: f64,
    fam: &MotilityFamily,
    params: &ModelParams,
) -> Result<f64> {
    let dt = state.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::domain(format!(
            "samples must advance in time, dt = {dt}"
        )));
    }
    check_signal(prev)?;
    check_signal(state)?;
    let j0 = power_integral(prev, a, b);
    let j1 = power_integral(state, a, b);
    let r0 = identity_rhs(prev, a, b, fam, params)?;
    let r1 = identity_rhs(state, a, b, fam, params)?;
    Ok((j1 - j0) / dt - 0.5 * (r0 + r1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    /// Exponents of the weighted functional `∫ u^p v^{-q}`.
    pub p: f64,
    pub q: f64,
    /// Exponents for the `L^p` norms of `u`; `f64::INFINITY` is the max norm.
    pub lp_exponents: Vec<f64>,
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.p > 1.0 && self.p <= 4.0) {
            errs.push(format!("exponents.p must lie in (1, 4], got {}", self.p));
        }
        if !(self.q > 0.0 && self.q <= 2.0) {
            errs.push(format!("exponents.q must lie in (0, 2], got {}", self.q));
        }
        if self.lp_exponents.iter().any(|&p| !(p >= 1.0)) {
            errs.push("run.lp_exponents must all be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Fills every field except the two residuals, which need a previous sample.
pub fn sample(state: &State, fam: &MotilityFamily, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    check_signal(state)?;
    let min_gamma = state
        .v
        .values()
        .iter()
        .map(|&v| fam.gamma(v))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let lp_u = cfg
        .lp_exponents
        .iter()
        .map(|&p| lp_norm(&state.u, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonitorRecord {
        t: state.t,
        mass_u: integrate(&state.u),
        int_v: integrate(&state.v),
        min_v: state.v.min(),
        min_gamma,
        sup_u: state.u.sup_abs(),
        sup_grad_v: max_face_gradient(&state.v),
        lp_u,
        w: weighted_functional(state, cfg.p, cfg.q)?,
        ineq_residual: f64::NAN,
        identity_residual: f64::NAN,
    })
}

/// Stateful sampler that keeps the previous sample for the residuals.
///
/// The identity residual is taken for `∫ u^p v^{-q}` itself.
pub struct Monitor {
    fam: MotilityFamily,
    params: ModelParams,
    cfg: MonitorConfig,
    prev: Option<(State, f64)>,
}

impl Monitor {
    pub fn new(fam: MotilityFamily, params: ModelParams, cfg: MonitorConfig) -> Self {
        Self {
            fam,
            params,
            cfg,
            prev: None,
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn observe(&mut self, state: &State) -> Result<MonitorRecord> {
        let mut rec = sample(state, &self.fam, &self.cfg)?;
        if let Some((prev, w_prev)) = &self.prev {
            if state.t > prev.t {
                rec.ineq_residual =
                    inequality_residual(prev.t, *w_prev, state, self.cfg.p, self.cfg.q)?;
                rec.identity_residual = identity_residual(
                    prev,
                    state,
                    self.cfg.p,
                    -self.cfg.q,
                    &self.fam,
                    &self.params,
                )?;
            }
        }
        self.prev = Some((state.clone(), rec.w));
        Ok(rec)
    }
}

/// Windowed no-growth check: after the first `head_fraction` of the series,
/// no value exceeds `factor` times the maximum over that head.
pub fn trend_bounded(series: &[f64], head_fraction: f64, factor: f64) -> bool {
    if series.is_empty() {
        return true;
    }
    let head = ((series.len() as f64 * head_fraction).ceil() as usize).clamp(1, series.len());
    let head_max = series[..head]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    series[head..].iter().all(|&x| x <= factor * head_max)
}
