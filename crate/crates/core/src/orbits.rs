//! Prime periods, scans for long orbits, and the two-stagnation-point
//! sufficient condition for arbitrarily long orbits.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{self, torus_distance, wrap_signed, StagnationKind, TorusPoint, TrigVelocityField, TWO_PI};
use crate::flow::{position_rhs, rk4_step};
use crate::mat2::{self, Vec2};
use crate::par::{self, Exec};

/// Torus distance accepted as a return to the starting point.
pub const DEFAULT_RETURN_TOL: f64 = 1e-8;
/// Time resolution of the bisection refinement.
pub const BISECTION_TOL: f64 = 1e-10;
/// Relative speed below which a point is treated as a stagnation point.
pub const STAGNATION_REL: f64 = 1e-10;
const STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Period {
    Finite(f64),
    /// No return before the horizon.
    Infinite,
    /// The point is (numerically) a stagnation point; period 0 by convention.
    Stagnation,
}

impl Period {
    /// Numeric value: `∞` for no return, 0 at stagnation points.
    pub fn value(&self) -> f64 {
        match *self {
            Period::Finite(p) => p,
            Period::Infinite => f64::INFINITY,
            Period::Stagnation => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Period::Finite(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub point: TorusPoint,
    pub period: Period,
    /// Distance to the start at the accepted return (or at the closest
    /// rejected section crossing when none was accepted; `∞` if there was no
    /// crossing at all).
    pub return_distance: f64,
    pub horizon: f64,
}

/// First return to `x` through the local section `{⟨y − x, u(x)⟩ = 0}`,
/// refined by bisection in time.
pub fn prime_period(u: &TrigVelocityField, x: &TorusPoint, horizon: f64, tol: f64) -> Result<PeriodEstimate> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("return tolerance must be positive".into()));
    }
    let x0 = x.as_array();
    let v0 = u.velocity(&x0);
    let speed = mat2::norm(&v0);
    if speed <= STAGNATION_REL * u.max_speed() || speed == 0.0 {
        return Ok(PeriodEstimate {
            point: *x,
            period: Period::Stagnation,
            return_distance: 0.0,
            horizon,
        });
    }
    let n = [v0[0] / speed, v0[1] / speed];
    let disp = |y: &Vec2| [wrap_signed(y[0] - x0[0]), wrap_signed(y[1] - x0[1])];
    let section = |y: &Vec2| mat2::dot(&disp(y), &n);
    let local = |y: &Vec2| mat2::norm(&disp(y)) < std::f64::consts::FRAC_PI_2;

    let f = position_rhs(u);
    let steps = (horizon / STEP).ceil() as usize;
    let mut y = x0;
    let mut s_prev = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..steps {
        let next = rk4_step(&f, &y, STEP);
        let s_next = section(&next);
        if s_prev < 0.0 && s_next >= 0.0 && local(&y) && local(&next) {
            let (mut lo, mut hi) = (0.0, STEP);
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if section(&rk4_step(&f, &y, mid)) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tc = 0.5 * (lo + hi);
            let hit = rk4_step(&f, &y, tc);
            let d = torus_distance(&hit, &x0);
            if d <= tol {
                return Ok(PeriodEstimate {
                    point: *x,
                    period: Period::Finite(k as f64 * STEP + tc),
                    return_distance: d,
                    horizon,
                });
            }
            best = best.min(d);
        }
        y = next;
        s_prev = s_next;
    }
    Ok(PeriodEstimate {
        point: *x,
        period: Period::Infinite,
        return_distance: best,
        horizon,
    })
}

/// Result of [`longest_orbit_scan`].
#[derive(Clone, Debug, Serialize)]
pub struct OrbitScan {
    pub target: f64,
    /// A point with `p ≥ target` (finite preferred), if found.
    pub witness: Option<PeriodEstimate>,
    /// Largest finite period among all evaluated points.
    pub longest_finite: Option<PeriodEstimate>,
    /// Grid seeds in row-major order, followed by refinement points.
    pub samples: Vec<PeriodEstimate>,
}

impl OrbitScan {
    pub fn bounded(&self) -> bool {
        self.witness.is_none()
    }

    /// CSV `x1,x2,period_or_inf,horizon`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,x2,period_or_inf,horizon\n");
        for e in &self.samples {
            let p = match e.period {
                Period::Infinite => "inf".to_string(),
                other => crate::fmt_float(other.value()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{}",
                crate::fmt_float(e.point.x1),
                crate::fmt_float(e.point.x2),
                p,
                crate::fmt_float(e.horizon)
            );
        }
        s
    }
}

fn pick_witness(samples: &[PeriodEstimate], target: f64) -> Option<PeriodEstimate> {
    let finite = samples
        .iter()
        .filter(|e| matches!(e.period, Period::Finite(p) if p >= target))
        .max_by(|a, b| a.period.value().partial_cmp(&b.period.value()).unwrap());
    finite
        .or_else(|| samples.iter().find(|e| e.period == Period::Infinite))
        .cloned()
}

/// Scan a cell-centred `seed_grid²` grid for a point with prime period at
/// least `target_n`. When the grid alone has none, the longest seed is pushed
/// geometrically toward the nearest non-elliptic stagnation point, where
/// periods diverge.
pub fn longest_orbit_scan(
    u: &TrigVelocityField,
    target_n: f64,
    seed_grid: usize,
    horizon: f64,
) -> Result<OrbitScan> {
    longest_orbit_scan_with(Exec::default(), u, target_n, seed_grid, horizon)
}

pub fn longest_orbit_scan_with(
    exec: Exec,
    u: &TrigVelocityField,
    target_n: f64,
    seed_grid: usize,
    horizon: f64,
) -> Result<OrbitScan> {
    if target_n > horizon {
        return Err(Error::InvalidInput(format!(
            "target {target_n} exceeds horizon {horizon}"
        )));
    }
    if seed_grid == 0 {
        return Err(Error::InvalidInput("empty seed grid".into()));
    }
    let h = TWO_PI / seed_grid as f64;
    let results = par::map_range(exec, seed_grid * seed_grid, |idx| {
        let (i, j) = (idx / seed_grid, idx % seed_grid);
        let x = TorusPoint::new(h * (i as f64 + 0.5), h * (j as f64 + 0.5));
        prime_period(u, &x, horizon, DEFAULT_RETURN_TOL)
    });
    let mut samples = results.into_iter().collect::<Result<Vec<_>>>()?;

    if pick_witness(&samples, target_n).is_none() {
        let seed = samples
            .iter()
            .filter(|e| e.period.is_finite())
            .max_by(|a, b| a.period.value().partial_cmp(&b.period.value()).unwrap())
            .cloned();
        let report = fields::stagnation_points(u);
        let anchors: Vec<Vec2> = report
            .points
            .iter()
            .filter(|p| !matches!(p.kind, StagnationKind::Center { .. }))
            .map(|p| p.location.as_array())
            .collect();
        if let Some(seed) = seed {
            let x = seed.point.as_array();
            let anchor = anchors
                .iter()
                .min_by(|a, b| torus_distance(a, &x).partial_cmp(&torus_distance(b, &x)).unwrap());
            if let Some(y) = anchor {
                let d = [wrap_signed(x[0] - y[0]), wrap_signed(x[1] - y[1])];
                for k in 1..=40 {
                    let f = 0.5f64.powi(k);
                    let p = TorusPoint::new(y[0] + f * d[0], y[1] + f * d[1]);
                    let e = prime_period(u, &p, horizon, DEFAULT_RETURN_TOL)?;
                    let done = match e.period {
                        Period::Finite(v) => v >= target_n,
                        Period::Infinite => true,
                        Period::Stagnation => true,
                    };
                    samples.push(e);
                    if done {
                        break;
                    }
                }
            }
        }
    }
    let witness = pick_witness(&samples, target_n);
    let longest_finite = samples
        .iter()
        .filter(|e| e.period.is_finite())
        .max_by(|a, b| a.period.value().partial_cmp(&b.period.value()).unwrap())
        .cloned();
    Ok(OrbitScan {
        target: target_n,
        witness,
        longest_finite,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LongOrbitPredicate {
    pub holds: bool,
    pub distinct_stagnation_points: usize,
    pub provenance: &'static str,
}

/// Sufficient condition for arbitrarily long orbits: `u ≢ 0` with at least
/// two distinct stagnation points. Non-isolated zero sets count through their
/// representatives. A `false` answer does not rule long orbits out.
pub fn long_orbit_predicate(u: &TrigVelocityField) -> LongOrbitPredicate {
    let provenance = "sufficient condition: nonzero steady flow with at least two distinct stagnation points";
    if u.is_zero() {
        return LongOrbitPredicate {
            holds: false,
            distinct_stagnation_points: 0,
            provenance,
        };
    }
    let n = fields::stagnation_points(u).points.len();
    LongOrbitPredicate {
        holds: n >= 2,
        distinct_stagnation_points: n,
        provenance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::presets::*;
    use std::f64::consts::PI;

    #[test]
    fn rigid_period() {
        let e = prime_period(&rigid(), &TorusPoint::new(0.4, 2.0), 20.0, DEFAULT_RETURN_TOL).unwrap();
        match e.period {
            Period::Finite(p) => assert!((p - TWO_PI).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shear_periods() {
        let e = prime_period(&shear(), &TorusPoint::new(0.0, PI / 2.0), 20.0, DEFAULT_RETURN_TOL).unwrap();
        assert!((e.period.value() - TWO_PI).abs() < 1e-9);
        let e = prime_period(&shear(), &TorusPoint::new(0.0, 0.1), 100.0, DEFAULT_RETURN_TOL).unwrap();
        let exact = TWO_PI / 0.1f64.sin();
        assert!((e.period.value() - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn stagnation_and_infinite() {
        let e = prime_period(&cellular(), &TorusPoint::new(0.0, 0.0), 10.0, DEFAULT_RETURN_TOL).unwrap();
        assert_eq!(e.period, Period::Stagnation);
        let e = prime_period(&cellular(), &TorusPoint::new(0.1, 0.0), 30.0, DEFAULT_RETURN_TOL).unwrap();
        assert_eq!(e.period, Period::Infinite);
    }

    #[test]
    fn scans() {
        let s = longest_orbit_scan(&shear(), 100.0, 64, 150.0).unwrap();
        let w = s.witness.unwrap();
        assert!(w.period.value() >= 100.0);
        assert!(w.point.x2.min(TWO_PI - w.point.x2) < 0.1 || (w.point.x2 - PI).abs() < 0.1);
        let r = longest_orbit_scan(&rigid(), 10.0, 8, 20.0).unwrap();
        assert!(r.bounded());
        assert!(r.samples.iter().all(|e| (e.period.value() - TWO_PI).abs() < 1e-9));
    }

    #[test]
    fn predicate() {
        assert!(long_orbit_predicate(&cellular()).holds);
        assert_eq!(long_orbit_predicate(&cellular()).distinct_stagnation_points, 8);
        assert!(!long_orbit_predicate(&rigid()).holds);
        assert!(long_orbit_predicate(&shear()).holds);
    }
}
