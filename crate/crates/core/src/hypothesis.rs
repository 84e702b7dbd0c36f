//! Audits of the structural conditions on a motility pair over a truncated
//! signal range, the closed-form thresholds of the algebraic family, and
//! the selection of a uniform exponent pair `(p, q)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motility::{EmptyReason, ModelParams, MotilityFamily, QInterval};

/// Minimum number of log-spaced scan points accepted by [`audit`].
pub const MIN_GRID_POINTS: usize = 64;
/// Dyadic refinement passes around the running minimum.
pub const REFINEMENT_LEVELS: usize = 2;
const GOLDEN_ITERATIONS: usize = 200;
/// `F > N/2` is only asserted when the margin clears this band (relative to
/// `max(1, N/2)`); boundary cases within scan accuracy count as failing.
pub const H3_MARGIN_TOLERANCE: f64 = 1e-10;
/// Ratio between the three points used to extrapolate a decreasing tail.
const TAIL_RATIO: f64 = 10.0;

/// Where the reported infimum was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "v", rename_all = "snake_case")]
pub enum InfLocation {
    /// Attained strictly inside the scan range.
    Interior(f64),
    /// Attained at `v_min`.
    LowerEndpoint(f64),
    /// Still decreasing at `v_max`: the true infimum may lie beyond the range.
    Tail(f64),
}

impl InfLocation {
    pub fn v(&self) -> f64 {
        match *self {
            InfLocation::Interior(v) | InfLocation::LowerEndpoint(v) | InfLocation::Tail(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub h1_ok: bool,
    pub h2_ok: bool,
    #[serde(with = "ext_real")]
    pub inf_f: f64,
    pub inf_f_location: InfLocation,
    pub h3_ok: bool,
    #[serde(with = "ext_real")]
    pub h3_margin: f64,
    pub scan_range: (f64, f64),
    pub grid_points: usize,
    pub refinement_levels: usize,
    /// `F(v_max)`.
    #[serde(with = "ext_real")]
    pub tail_f: f64,
    /// `F(v_max) - F(v_prev)` for the last scan interval; negative means the
    /// weight is still decreasing into the tail.
    #[serde(with = "ext_real")]
    pub tail_slope: f64,
    /// Aitken extrapolation of `F(v)` as `v -> inf`, present when the tail
    /// decreases geometrically; folded into `inf_f`.
    pub tail_limit: Option<f64>,
}

/// JSON has no infinity; extended reals are written as `"inf"`.
pub(crate) mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// `n` points from `v_min` to `v_max`, equally spaced in `ln v`, with both
/// endpoints exact.
pub fn log_grid(v_min: f64, v_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (v_min.ln(), v_max.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = v_min;
    grid[n - 1] = v_max;
    grid
}

struct Scan<'a> {
    fam: &'a MotilityFamily,
    params: &'a ModelParams,
    h2_ok: bool,
}

impl Scan<'_> {
    fn f_at(&mut self, v: f64) -> Result<f64> {
        let pt = self.fam.point(self.params, v)?;
        if self.fam.phi(v)? < 0.0 {
            self.h2_ok = false;
        }
        Ok(pt.f_value())
    }
}

fn check_range(v_min: f64, v_max: f64) -> Result<()> {
    if !(v_min > 0.0 && v_max > v_min && v_max.is_finite()) {
        return Err(Error::domain(format!(
            "scan range must satisfy 0 < v_min < v_max < inf, got [{v_min}, {v_max}]"
        )));
    }
    Ok(())
}

/// Scans `F` on a log-spaced grid, refines around the minimum, and reports
/// the sign checks on `gamma` and `phi` together with the infimum.
pub fn audit(
    fam: &MotilityFamily,
    params: &ModelParams,
    v_min: f64,
    v_max: f64,
    grid_points: usize,
) -> Result<AuditReport> {
    check_range(v_min, v_max)?;
    if grid_points < MIN_GRID_POINTS {
        return Err(Error::domain(format!(
            "grid_points must be at least {MIN_GRID_POINTS}, got {grid_points}"
        )));
    }
    fam.validate()?;
    params.validate()?;
    let mut scan = Scan {
        fam,
        params,
        h2_ok: true,
    };

    let grid = log_grid(v_min, v_max, grid_points);
    let values = grid
        .iter()
        .map(|&v| scan.f_at(v))
        .collect::<Result<Vec<f64>>>()?;
    let (k_best, _) =
        values.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(kb, fb), (k, &f)| if f < fb { (k, f) } else { (kb, fb) },
        );
    let n = grid.len();
    let mut best_v = grid[k_best];
    let mut best_f = values[k_best];
    let mut lo = grid[k_best.saturating_sub(1)];
    let mut hi = grid[(k_best + 1).min(n - 1)];

    // dyadic refinement (in ln v) of the bracket around the running minimum
    for _ in 0..REFINEMENT_LEVELS {
        let mut candidates = vec![(lo, None), (best_v, Some(best_f)), (hi, None)];
        if lo < best_v {
            candidates.insert(1, ((lo * best_v).sqrt(), None));
        }
        if best_v < hi {
            let at = candidates.len() - 1;
            candidates.insert(at, ((best_v * hi).sqrt(), None));
        }
        let mut evaluated = Vec::with_capacity(candidates.len());
        for (v, f) in candidates {
            let f = match f {
                Some(f) => f,
                None => scan.f_at(v)?,
            };
            evaluated.push((v, f));
        }
        let mut kb = 0;
        for (k, &(_, f)) in evaluated.iter().enumerate() {
            if f < evaluated[kb].1 {
                kb = k;
            }
        }
        best_v = evaluated[kb].0;
        best_f = evaluated[kb].1;
        lo = evaluated[kb.saturating_sub(1)].0;
        hi = evaluated[(kb + 1).min(evaluated.len() - 1)].0;
    }

    // golden-section search in ln v inside the final bracket
    if lo < hi && best_f.is_finite() {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = scan.f_at(c.exp())?;
        let mut fd = scan.f_at(d.exp())?;
        for _ in 0..GOLDEN_ITERATIONS {
            if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = scan.f_at(c.exp())?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = scan.f_at(d.exp())?;
            }
        }
        for (x, f) in [(c, fc), (d, fd)] {
            if f < best_f {
                best_f = f;
                best_v = x.exp();
            }
        }
    }

    let tail_f = values[n - 1];
    let tail_slope = if tail_f.is_finite() && values[n - 2].is_finite() {
        tail_f - values[n - 2]
    } else {
        0.0
    };
    let tail_limit = if tail_slope < 0.0 {
        let f0 = scan.f_at(v_max / (TAIL_RATIO * TAIL_RATIO))?;
        let f1 = scan.f_at(v_max / TAIL_RATIO)?;
        aitken_limit(f0, f1, tail_f)
    } else {
        None
    };
    if let Some(l) = tail_limit {
        if l < best_f {
            best_f = l;
            best_v = v_max;
        }
    }
    let location = if best_v >= v_max {
        InfLocation::Tail(v_max)
    } else if best_v <= v_min {
        InfLocation::LowerEndpoint(v_min)
    } else {
        InfLocation::Interior(best_v)
    };
    let half = params.half_dim();
    Ok(AuditReport {
        h1_ok: true,
        h2_ok: scan.h2_ok,
        inf_f: best_f,
        inf_f_location: location,
        h3_ok: best_f - half > H3_MARGIN_TOLERANCE * half.max(1.0),
        h3_margin: best_f - half,
        scan_range: (v_min, v_max),
        grid_points,
        refinement_levels: REFINEMENT_LEVELS,
        tail_f,
        tail_slope,
        tail_limit,
    })
}

/// Limit of a sequence decreasing with geometrically shrinking steps, or
/// `None` when the three values do not look like one.
fn aitken_limit(f0: f64, f1: f64, f2: f64) -> Option<f64> {
    let (d1, d2) = (f1 - f0, f2 - f1);
    if !(d1 < 0.0 && d2 < 0.0 && d2 > d1) || !(f0.is_finite() && f2.is_finite()) {
        return None;
    }
    let limit = f2 - d2 * d2 / (d2 - d1);
    limit.is_finite().then_some(limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdCase {
    /// `lambda > 1 / (1 - alpha)`: the infimum sits at the lower bound `eta` of `v`.
    StrongDecay,
    /// `lambda <= 1 / (1 - alpha)`: the infimum is the `v -> inf` limit.
    WeakDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub inf_f_closed: f64,
    pub bounded_claim: bool,
    pub case: ThresholdCase,
}

/// Closed-form infimum of `F` for `gamma = sigma / v^lambda`,
/// `phi = (alpha - 1) gamma'` over `v >= eta`.
pub fn algebraic_threshold(
    sigma: f64,
    lambda: f64,
    alpha: f64,
    d: f64,
    eta: f64,
    n_dim: usize,
) -> Result<Threshold> {
    let positive = |x: f64| x > 0.0 && x.is_finite();
    if !(positive(sigma) && positive(lambda) && positive(d) && positive(eta)) {
        return Err(Error::domain(
            "sigma, lambda, d and eta must all be positive and finite",
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let k = lambda * (1.0 - alpha);
    let (inf_f_closed, case) = if lambda > 1.0 / (1.0 - alpha) {
        let bracket = ((k - 1.0) * sigma / eta.powf(lambda) + d).max(0.0);
        (d / (k * bracket), ThresholdCase::StrongDecay)
    } else {
        (1.0 / k, ThresholdCase::WeakDecay)
    };
    Ok(Threshold {
        inf_f_closed,
        bounded_claim: inf_f_closed > n_dim as f64 / 2.0,
        case,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentChoice {
    pub p: f64,
    pub q: f64,
    pub feasible: bool,
    pub interval_used: QInterval,
}

/// `p = N/2 + min(0.25, (inf F - N/2) / 2)`, floored at `1 + 0.25` when
/// `N = 1` so that `p > 1`.
pub fn select_p(inf_f: f64, n_dim: usize) -> f64 {
    let half = n_dim as f64 / 2.0;
    let step = if inf_f.is_finite() {
        (0.5 * (inf_f - half)).min(0.25)
    } else {
        0.25
    };
    let p = half + step;
    if p > 1.0 {
        p
    } else {
        1.0 + step.clamp(f64::EPSILON, 0.25)
    }
}

/// Picks a uniform `(p, q)` for the weighted functional `∫ u^p v^{-q}`.
///
/// `q` is the midpoint of the intersection over the scan grid of the
/// pointwise admissible intervals. Infeasibility is reported in the result.
pub fn choose_exponents(
    fam: &MotilityFamily,
    params: &ModelParams,
    v_min: f64,
    v_max: f64,
    grid_points: usize,
) -> Result<ExponentChoice> {
    let report = audit(fam, params, v_min, v_max, grid_points)?;
    let p = select_p(report.inf_f, params.n_dim);
    let infeasible = |interval_used| ExponentChoice {
        p,
        q: 0.0,
        feasible: false,
        interval_used,
    };
    if !report.h3_ok || report.inf_f <= p {
        return Ok(infeasible(QInterval::empty_with(
            EmptyReason::RawIntervalVoid,
        )));
    }
    let grid = log_grid(v_min, v_max, grid_points);
    let mut lower = 0.0f64;
    let mut upper = f64::INFINITY;
    let mut points = Vec::with_capacity(grid.len());
    for &v in &grid {
        let pt = fam.point(params, v)?;
        let co = pt.coefficients(p);
        if co.b <= 0.0 {
            return Ok(infeasible(QInterval::empty_with(EmptyReason::NonPositiveB)));
        }
        lower = lower.max(2.0 * co.c / co.b);
        upper = upper.min(co.b / (2.0 * co.a));
        points.push(pt);
    }
    let cap = params.half_dim().min(p);
    let interval = QInterval::from_bounds(lower, upper, cap, EmptyReason::RawIntervalVoid);
    let Some(q) = interval.midpoint() else {
        return Ok(infeasible(interval));
    };
    if points.iter().any(|pt| pt.g(p, q) >= 0.0) {
        return Ok(infeasible(interval));
    }
    Ok(ExponentChoice {
        p,
        q,
        feasible: true,
        interval_used: interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(d: f64, n: usize) -> ModelParams {
        ModelParams::new(d, n, vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn singular_audit_is_constant() {
        let r = audit(
            &MotilityFamily::Singular { chi: 0.5 },
            &params(1.0, 2),
            1e-3,
            1e6,
            256,
        )
        .unwrap();
        assert!(r.h1_ok && r.h2_ok && r.h3_ok);
        assert_relative_eq!(r.inf_f, 4.0, max_relative = 1e-12);
        assert_relative_eq!(r.h3_margin, 3.0, max_relative = 1e-12);

        let r = audit(
            &MotilityFamily::Singular { chi: 1.5 },
            &params(1.0, 2),
            1e-3,
            1e6,
            256,
        )
        .unwrap();
        assert!(!r.h3_ok);
        assert_relative_eq!(r.inf_f, 1.0 / 2.25, max_relative = 1e-12);
    }

    #[test]
    fn algebraic_audit_is_tail_limited() {
        let fam = MotilityFamily::AlgebraicKs {
            sigma: 1.0,
            lambda: 1.0,
            alpha: 0.5,
        };
        let r = audit(&fam, &params(1.0, 2), 1e-3, 1e6, 2048).unwrap();
        assert!((r.inf_f - 2.0).abs() < 1e-10);
        assert!(r.tail_f > r.inf_f);
        assert!(r.h3_ok);

        // N = 4 puts the limit exactly on N/2: the strict inequality fails
        let r = audit(&fam, &params(1.0, 4), 1e-3, 1e6, 2048).unwrap();
        assert!(!r.h3_ok);
        assert!(r.h3_margin.abs() < 1e-10);

        // slow decay: the raw scan is far off, the extrapolated tail is not
        let slow = MotilityFamily::AlgebraicKs {
            sigma: 1.0,
            lambda: 0.5,
            alpha: 0.5,
        };
        let r = audit(&slow, &params(1.0, 2), 1e-3, 1e6, 2048).unwrap();
        assert!(r.tail_f - 4.0 > 1e-3);
        assert!((r.inf_f - 4.0).abs() < 1e-4);
        assert!(matches!(r.inf_f_location, InfLocation::Tail(_)));
        assert!(r.tail_slope < 0.0);
    }

    #[test]
    fn strong_decay_audit_hits_lower_endpoint() {
        let fam = MotilityFamily::AlgebraicKs {
            sigma: 1.0,
            lambda: 3.0,
            alpha: 0.5,
        };
        let r = audit(&fam, &params(1.0, 2), 1.0, 1e6, 512).unwrap();
        assert!(matches!(r.inf_f_location, InfLocation::LowerEndpoint(_)));
        assert_relative_eq!(r.inf_f, 1.0 / 2.25, max_relative = 1e-12);
    }

    #[test]
    fn interior_minimum_is_refined() {
        // gamma decreasing to a floor while phi_bar has a bump: F has an
        // interior minimum that the golden search must locate
        let v: Vec<f64> = (0..40).map(|k| 0.1 * 1.25f64.powi(k)).collect();
        let gamma: Vec<f64> = v.iter().map(|x| 0.5 + 1.0 / (1.0 + x)).collect();
        let phi: Vec<f64> = v
            .iter()
            .map(|x| 0.8 * (-(x.ln() - 1.0).powi(2)).exp() / x)
            .collect();
        let fam = MotilityFamily::Custom(crate::motility::CustomTable::new(v, gamma, phi).unwrap());
        let p = params(1.0, 2);
        let r = audit(&fam, &p, 0.1, 500.0, 64).unwrap();
        let InfLocation::Interior(vstar) = r.inf_f_location else {
            panic!("expected interior minimum, got {:?}", r.inf_f_location);
        };
        // brute force on a very fine grid never beats the refined result by more than rounding
        let fine = log_grid(0.1, 500.0, 200_001);
        let brute = fine
            .iter()
            .map(|&x| fam.point(&p, x).unwrap().f_value())
            .fold(f64::INFINITY, f64::min);
        assert!(r.inf_f <= brute + 1e-9, "{} vs {}", r.inf_f, brute);
        assert!(vstar > 0.1 && vstar < 500.0);
    }

    #[test]
    fn audit_rejects_bad_input() {
        let fam = MotilityFamily::Singular { chi: 0.5 };
        assert!(audit(&fam, &params(1.0, 2), 0.0, 1.0, 64).is_err());
        assert!(audit(&fam, &params(1.0, 2), 2.0, 1.0, 64).is_err());
        assert!(audit(&fam, &params(1.0, 2), 1.0, 2.0, 10).is_err());
        let neg =
            crate::motility::CustomTable::new(vec![1.0, 2.0], vec![1.0, -0.5], vec![0.0, 0.0])
                .unwrap();
        assert!(matches!(
            audit(&MotilityFamily::Custom(neg), &params(1.0, 2), 1.0, 3.0, 64),
            Err(Error::NegativeMotility { .. })
        ));
    }

    #[test]
    fn threshold_cases() {
        let t = algebraic_threshold(3.0, 1.0, 0.5, 0.7, 0.2, 2).unwrap();
        assert_eq!(t.case, ThresholdCase::WeakDecay);
        assert_relative_eq!(t.inf_f_closed, 2.0);
        assert!(t.bounded_claim);

        let t = algebraic_threshold(1.0, 3.0, 0.5, 1.0, 1.0, 2).unwrap();
        assert_eq!(t.case, ThresholdCase::StrongDecay);
        assert_relative_eq!(t.inf_f_closed, 1.0 / 2.25, max_relative = 1e-14);
        assert!(!t.bounded_claim);

        let t = algebraic_threshold(1.0, 2.0, 0.5, 1.0, 1.0, 2).unwrap();
        assert_eq!(t.case, ThresholdCase::WeakDecay);
        assert_relative_eq!(t.inf_f_closed, 1.0);

        assert!(algebraic_threshold(1.0, 1.0, 1.0, 1.0, 1.0, 2).is_err());
        assert!(algebraic_threshold(-1.0, 1.0, 0.5, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn exponents_for_singular_family() {
        let e = choose_exponents(
            &MotilityFamily::Singular { chi: 0.5 },
            &params(1.0, 2),
            1e-3,
            1e6,
            128,
        )
        .unwrap();
        assert!(e.feasible);
        assert_relative_eq!(e.p, 1.25);
        assert!(e.q > 0.0 && e.q < 1.0);
        let pt = MotilityFamily::Singular { chi: 0.5 }
            .point(&params(1.0, 2), 1.0)
            .unwrap();
        assert!(pt.q_interval(e.p, 2).contains(e.q));
    }

    #[test]
    fn exponents_infeasible_when_f_too_small() {
        let e = choose_exponents(
            &MotilityFamily::Singular { chi: 1.0 },
            &params(1.0, 2),
            1e-3,
            1e6,
            128,
        )
        .unwrap();
        assert!(!e.feasible);
    }

    #[test]
    fn exponents_for_heat_limit() {
        let heat = MotilityFamily::Constant {
            gamma0: 1.0,
            phi0: 0.0,
        };
        let e = choose_exponents(&heat, &params(1.0, 2), 1e-3, 1e3, 64).unwrap();
        assert!(e.feasible);
        assert_relative_eq!(e.p, 1.25);
        assert_eq!(e.interval_used.lower, 0.0);
        // B / (2A) with gamma = d = 1: A = 4, B = 2 (p - 1) 2
        assert_relative_eq!(e.interval_used.upper, 0.125);
        assert!(e.interval_used.upper_inclusive);
    }

    #[test]
    fn p_selection_for_line_domains() {
        assert!(select_p(10.0, 1) > 1.0);
        assert_relative_eq!(select_p(1.1, 2), 1.05);
        assert_relative_eq!(select_p(f64::INFINITY, 4), 2.25);
    }
}
