//! Motility pairs `(gamma, phi)` and the structural quantities built from them.
//!
//! Everything here is a pure function of plain values. The pointwise algebra
//! (coefficients, comparison functions, the quadratic `g`, the admissible
//! `q`-interval) lives on [`PointValues`], which only needs `gamma(v)`,
//! `v * phi(v)` and `d`; the free functions resolve a family at `v` first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model constants shared by the audit and the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Chemical diffusivity.
    pub d: f64,
    /// Space dimension entering the `N/2` thresholds.
    pub n_dim: usize,
    pub domain_lengths: Vec<f64>,
}

impl ModelParams {
    pub fn new(d: f64, n_dim: usize, domain_lengths: Vec<f64>) -> Result<Self> {
        let params = Self {
            d,
            n_dim,
            domain_lengths,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.d > 0.0 && self.d.is_finite()) {
            errs.push(format!("model.d must be positive, got {}", self.d));
        }
        if !(1..=4).contains(&self.n_dim) {
            errs.push(format!("model.n_dim must be in 1..=4, got {}", self.n_dim));
        }
        if self
            .domain_lengths
            .iter()
            .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            errs.push("model.lengths must all be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// `N / 2`.
    pub fn half_dim(&self) -> f64 {
        self.n_dim as f64 / 2.0
    }
}

/// Sampled motility pair with monotone piecewise-cubic interpolation.
///
/// Values outside the sampled range are held constant at the nearest end.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    v: Vec<f64>,
    gamma: Vec<f64>,
    phi: Vec<f64>,
    gamma_slopes: Vec<f64>,
    phi_slopes: Vec<f64>,
}

impl CustomTable {
    pub fn new(v: Vec<f64>, gamma: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::domain("custom table needs at least two samples"));
        }
        if gamma.len() != v.len() || phi.len() != v.len() {
            return Err(Error::domain("custom table columns differ in length"));
        }
        if v.iter().chain(&gamma).chain(&phi).any(|x| !x.is_finite()) {
            return Err(Error::domain("custom table contains non-finite entries"));
        }
        if v[0] < 0.0 || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain(
                "custom table abscissae must be nonnegative and strictly increasing",
            ));
        }
        let gamma_slopes = pchip_slopes(&v, &gamma);
        let phi_slopes = pchip_slopes(&v, &phi);
        Ok(Self {
            v,
            gamma,
            phi,
            gamma_slopes,
            phi_slopes,
        })
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.v
    }

    pub fn gamma_samples(&self) -> &[f64] {
        &self.gamma
    }

    pub fn phi_samples(&self) -> &[f64] {
        &self.phi
    }

    fn gamma_at(&self, v: f64) -> f64 {
        hermite_eval(&self.v, &self.gamma, &self.gamma_slopes, v)
    }

    fn phi_at(&self, v: f64) -> f64 {
        hermite_eval(&self.v, &self.phi, &self.phi_slopes, v)
    }
}

/// Fritsch-Butland interior slopes (weighted harmonic mean of adjacent
/// secants, zero at local extrema) with one-sided secants at the ends.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for k in 1..n - 1 {
        let (d0, d1) = (delta[k - 1], delta[k]);
        if d0 * d1 <= 0.0 {
            m[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
        }
    }
    m
}

fn hermite_eval(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let n = x.len();
    if t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let k = x.partition_point(|&xi| xi <= t) - 1;
    let h = x[k + 1] - x[k];
    let s = (t - x[k]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y[k] + h10 * h * m[k] + h01 * y[k + 1] + h11 * h * m[k + 1]
}

/// The motility pair `(gamma, phi)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MotilityFamily {
    /// `gamma = gamma0`, `phi = phi0`.
    Constant {
        gamma0: f64,
        phi0: f64,
    },
    /// `gamma = 1`, `phi = chi / v`.
    Singular {
        chi: f64,
    },
    /// `gamma = sigma / v^lambda`, `phi = (alpha - 1) gamma'`.
    AlgebraicKs {
        sigma: f64,
        lambda: f64,
        alpha: f64,
    },
    Custom(CustomTable),
}

impl MotilityFamily {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match *self {
            MotilityFamily::Constant { gamma0, phi0 } => {
                if !(gamma0 > 0.0 && gamma0.is_finite()) {
                    errs.push(format!("family.gamma0 must be positive, got {gamma0}"));
                }
                if !(phi0 >= 0.0 && phi0.is_finite()) {
                    errs.push(format!("family.phi0 must be nonnegative, got {phi0}"));
                }
            }
            MotilityFamily::Singular { chi } => {
                if !(chi > 0.0 && chi.is_finite()) {
                    errs.push(format!("family.chi must be positive, got {chi}"));
                }
            }
            MotilityFamily::AlgebraicKs {
                sigma,
                lambda,
                alpha,
            } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    errs.push(format!("family.sigma must be positive, got {sigma}"));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    errs.push(format!("family.lambda must be positive, got {lambda}"));
                }
                if !(alpha > 0.0 && alpha < 1.0) {
                    errs.push(format!(
                        "family.alpha must lie in (0, 1) for gamma = sigma / v^lambda \
                         with phi = (alpha - 1) gamma', got {alpha}"
                    ));
                }
            }
            MotilityFamily::Custom(_) => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Whether `gamma` or `phi` is undefined at `v = 0`.
    pub fn is_singular_at_zero(&self) -> bool {
        matches!(
            self,
            MotilityFamily::Singular { .. } | MotilityFamily::AlgebraicKs { .. }
        )
    }

    /// Limit of `v * phi(v)` as `v -> 0+`; `None` when it diverges.
    pub fn phi_bar_limit_at_zero(&self) -> Option<f64> {
        match *self {
            MotilityFamily::Constant { .. } => Some(0.0),
            MotilityFamily::Singular { chi } => Some(chi),
            MotilityFamily::AlgebraicKs { .. } => None,
            MotilityFamily::Custom(_) => Some(0.0),
        }
    }

    fn check_v(&self, v: f64) -> Result<()> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::domain(format!(
                "v must be finite and nonnegative, got {v}"
            )));
        }
        if v == 0.0 && self.is_singular_at_zero() {
            return Err(Error::domain("motility family is singular at v = 0"));
        }
        Ok(())
    }

    pub fn gamma(&self, v: f64) -> Result<f64> {
        self.check_v(v)?;
        let g = self.gamma_unchecked(v);
        if g <= 0.0 || g.is_nan() {
            return Err(Error::NegativeMotility { v, value: g });
        }
        Ok(g)
    }

    pub fn phi(&self, v: f64) -> Result<f64> {
        self.check_v(v)?;
        Ok(self.phi_unchecked(v))
    }

    /// `v * phi(v)`.
    pub fn phi_bar(&self, v: f64) -> Result<f64> {
        self.check_v(v)?;
        Ok(self.phi_bar_unchecked(v))
    }

    /// Evaluation without domain checks; the caller guarantees `v > 0` for
    /// families singular at zero.
    pub(crate) fn gamma_unchecked(&self, v: f64) -> f64 {
        match self {
            MotilityFamily::Constant { gamma0, .. } => *gamma0,
            MotilityFamily::Singular { .. } => 1.0,
            MotilityFamily::AlgebraicKs { sigma, lambda, .. } => sigma * v.powf(-lambda),
            MotilityFamily::Custom(t) => t.gamma_at(v),
        }
    }

    pub(crate) fn phi_unchecked(&self, v: f64) -> f64 {
        match self {
            MotilityFamily::Constant { phi0, .. } => *phi0,
            MotilityFamily::Singular { chi } => chi / v,
            MotilityFamily::AlgebraicKs {
                sigma,
                lambda,
                alpha,
            } => (1.0 - alpha) * lambda * sigma * v.powf(-lambda - 1.0),
            MotilityFamily::Custom(t) => t.phi_at(v),
        }
    }

    pub(crate) fn phi_bar_unchecked(&self, v: f64) -> f64 {
        match self {
            MotilityFamily::Singular { chi } => *chi,
            MotilityFamily::AlgebraicKs {
                sigma,
                lambda,
                alpha,
            } => (1.0 - alpha) * lambda * sigma * v.powf(-lambda),
            _ => v * self.phi_unchecked(v),
        }
    }

    /// Resolves the family at `v` into the values the structural algebra needs.
    pub fn point(&self, params: &ModelParams, v: f64) -> Result<PointValues> {
        Ok(PointValues {
            gamma: self.gamma(v)?,
            phi_bar: self.phi_bar(v)?,
            d: params.d,
        })
    }
}

/// `gamma(v)`, `v phi(v)` and `d` at a single signal level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub gamma: f64,
    pub phi_bar: f64,
    pub d: f64,
}

/// The coefficients of the quadratic `A q^2 - B q + C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Coefficients {
    pub fn quadratic(&self, q: f64) -> f64 {
        self.a * q * q - self.b * q + self.c
    }

    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }
}

/// The comparison functions `gamma_1 .. gamma_4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparators {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyReason {
    /// `B <= 0`: the raw interval is undefined.
    NonPositiveB,
    /// `2C/B >= B/(2A)`.
    RawIntervalVoid,
    /// The raw interval misses `(0, min{N/2, p})`.
    OutsideRange,
}

/// `(lower, upper]` (or `(lower, upper)` when the cap `min{N/2, p}` binds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QInterval {
    pub lower: f64,
    pub upper: f64,
    pub upper_inclusive: bool,
    pub empty: bool,
    pub reason: Option<EmptyReason>,
}

impl QInterval {
    pub(crate) fn from_bounds(
        raw_lower: f64,
        raw_upper: f64,
        cap: f64,
        reason_if_raw_void: EmptyReason,
    ) -> Self {
        let raw_void = raw_lower >= raw_upper;
        let lower = raw_lower.max(0.0);
        let (upper, upper_inclusive) = if raw_upper < cap {
            (raw_upper, true)
        } else {
            (cap, false)
        };
        let empty = lower >= upper || upper <= 0.0;
        let reason = if !empty {
            None
        } else if raw_void {
            Some(reason_if_raw_void)
        } else {
            Some(EmptyReason::OutsideRange)
        };
        Self {
            lower,
            upper,
            upper_inclusive,
            empty,
            reason,
        }
    }

    pub(crate) fn empty_with(reason: EmptyReason) -> Self {
        Self {
            lower: 0.0,
            upper: 0.0,
            upper_inclusive: false,
            empty: true,
            reason: Some(reason),
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        !self.empty
            && q > self.lower
            && (q < self.upper || (self.upper_inclusive && q == self.upper))
    }

    pub fn midpoint(&self) -> Option<f64> {
        (!self.empty).then_some(0.5 * (self.lower + self.upper))
    }
}

impl PointValues {
    /// The weight `d gamma / (phi_bar (phi_bar + d - gamma)_+)`; infinite
    /// where the denominator vanishes.
    pub fn f_value(&self) -> f64 {
        let excess = (self.phi_bar + self.d - self.gamma).max(0.0);
        let denom = self.phi_bar * excess;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            self.d * self.gamma / denom
        }
    }

    pub fn coefficients(&self, p: f64) -> Coefficients {
        let PointValues { gamma, phi_bar, d } = *self;
        Coefficients {
            a: 4.0 * gamma * d + p * gamma * gamma + p * d * d - 2.0 * d * p * gamma,
            b: 2.0 * (p - 1.0) * (2.0 * gamma * d + p * phi_bar * (gamma - d)),
            c: p * (p - 1.0) * (p - 1.0) * phi_bar * phi_bar,
        }
    }

    pub fn comparators(&self, p: f64, n_dim: usize) -> Comparators {
        let PointValues { phi_bar, d, .. } = *self;
        let n = n_dim as f64;
        let two_d_p = 2.0 * d + p * phi_bar;
        Comparators {
            g1: p * phi_bar * (d + phi_bar) / (d + p * phi_bar),
            g2: p * phi_bar * d / two_d_p,
            g3: p * phi_bar * (2.0 * (p - 1.0) * phi_bar + d * n) / (n * two_d_p),
            g4: phi_bar * ((p - 1.0) * phi_bar + p * d) / two_d_p,
        }
    }

    /// `g(p; q, v)` in its defining form (not via the coefficients).
    pub fn g(&self, p: f64, q: f64) -> f64 {
        let PointValues { gamma, phi_bar, d } = *self;
        let s = (p - 1.0) * phi_bar + q * gamma + d * q;
        p / (4.0 * (p - 1.0)) * s * s / gamma - d * q * (q + 1.0) - p * q * phi_bar
    }

    pub fn q_interval(&self, p: f64, n_dim: usize) -> QInterval {
        let co = self.coefficients(p);
        if co.b <= 0.0 {
            return QInterval::empty_with(EmptyReason::NonPositiveB);
        }
        let cap = (n_dim as f64 / 2.0).min(p);
        QInterval::from_bounds(
            2.0 * co.c / co.b,
            co.b / (2.0 * co.a),
            cap,
            EmptyReason::RawIntervalVoid,
        )
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("exponent p must exceed 1, got {p}")))
    }
}

pub fn eval_gamma(fam: &MotilityFamily, v: f64) -> Result<f64> {
    fam.gamma(v)
}

pub fn eval_phi(fam: &MotilityFamily, v: f64) -> Result<f64> {
    fam.phi(v)
}

pub fn phi_bar(fam: &MotilityFamily, v: f64) -> Result<f64> {
    fam.phi_bar(v)
}

pub fn eval_f(fam: &MotilityFamily, params: &ModelParams, v: f64) -> Result<f64> {
    if v == 0.0 && !fam.is_singular_at_zero() {
        // phi_bar(0) = 0 for regular families
        fam.gamma(v)?;
        return Ok(f64::INFINITY);
    }
    Ok(fam.point(params, v)?.f_value())
}

pub fn coeff_abc(
    fam: &MotilityFamily,
    params: &ModelParams,
    p: f64,
    v: f64,
) -> Result<Coefficients> {
    check_p(p)?;
    Ok(fam.point(params, v)?.coefficients(p))
}

pub fn gamma_comparators(
    fam: &MotilityFamily,
    params: &ModelParams,
    p: f64,
    v: f64,
) -> Result<Comparators> {
    check_p(p)?;
    Ok(fam.point(params, v)?.comparators(p, params.n_dim))
}

pub fn eval_g(fam: &MotilityFamily, params: &ModelParams, p: f64, q: f64, v: f64) -> Result<f64> {
    check_p(p)?;
    Ok(fam.point(params, v)?.g(p, q))
}

pub fn q_interval(fam: &MotilityFamily, params: &ModelParams, p: f64, v: f64) -> Result<QInterval> {
    check_p(p)?;
    Ok(fam.point(params, v)?.q_interval(p, params.n_dim))
}
