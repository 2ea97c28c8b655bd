//! Flow map `φ_t`, its first and second variations, the transverse flow
//! `ψ_τ`, and the streamline chart `H(t, τ) = φ_t ∘ ψ_τ(x₀)`.
//!
//! Positions are integrated on the universal cover (unwrapped) and reduced to
//! the torus only when reported as [`TorusPoint`]s.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{wrap_signed, TorusPoint, TrigVelocityField};
use crate::mat2::{self, Mat2, Tensor2, Vec2};
use crate::orbits::{self, Period};

/// Integrator configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StepControl {
    /// Classical RK4 with the largest step `≤ h` dividing the interval evenly.
    Fixed { h: f64 },
    /// Dormand–Prince 5(4) with mixed error control.
    Adaptive { rtol: f64, atol: f64, h_min: f64 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Fixed { h: 1e-3 }
    }
}

impl StepControl {
    pub fn adaptive(tol: f64) -> Self {
        StepControl::Adaptive {
            rtol: tol,
            atol: tol,
            h_min: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepControl::Fixed { h } => h.is_finite() && h > 0.0,
            StepControl::Adaptive { rtol, atol, h_min } => {
                rtol > 0.0 && atol > 0.0 && h_min > 0.0 && rtol.is_finite() && atol.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid step control {self:?}")))
        }
    }

    /// Nominal step used when sampling on a lattice.
    pub fn nominal_step(&self) -> f64 {
        match *self {
            StepControl::Fixed { h } => h,
            StepControl::Adaptive { .. } => 1e-2,
        }
    }
}

// ---------------------------------------------------------------------------
// Generic one-step integrators on R^D

fn axpy<const D: usize>(y: &[f64; D], h: f64, k: &[f64; D]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        out[i] += h * k[i];
    }
    out
}

pub(crate) fn rk4_step<const D: usize, F>(f: &F, y: &[f64; D], h: f64) -> [f64; D]
where
    F: Fn(&[f64; D]) -> [f64; D],
{
    let k1 = f(y);
    let k2 = f(&axpy(y, 0.5 * h, &k1));
    let k3 = f(&axpy(y, 0.5 * h, &k2));
    let k4 = f(&axpy(y, h, &k3));
    let mut out = *y;
    for i in 0..D {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn check_finite<const D: usize>(t: f64, y: &[f64; D], last: &[f64; D]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFailure {
            time: t,
            state: [last[0], last[1]],
            reason: "non-finite state".into(),
        })
    }
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration of a possibly failing vector field
/// from 0 to `t_end` (either sign). `obs` sees every accepted step.
pub(crate) fn dp45<const D: usize, F, O>(
    f: &F,
    y0: [f64; D],
    t_end: f64,
    rtol: f64,
    atol: f64,
    h_min: f64,
    mut obs: O,
) -> Result<[f64; D]>
where
    F: Fn(&[f64; D]) -> Result<[f64; D]>,
    O: FnMut(f64, &[f64; D]),
{
    let dir = if t_end < 0.0 { -1.0 } else { 1.0 };
    let total = t_end.abs();
    let g = |y: &[f64; D], t: f64| -> Result<[f64; D]> {
        match f(y) {
            Ok(mut v) => {
                if dir < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                Ok(v)
            }
            Err(Error::StagnationProximity { speed, floor, .. }) => Err(Error::StagnationProximity {
                tau: dir * t,
                speed,
                floor,
            }),
            Err(e) => Err(e),
        }
    };
    let mut y = y0;
    let mut t = 0.0;
    obs(0.0, &y);
    if total == 0.0 {
        return Ok(y);
    }
    let mut h = (0.01 * total).min(0.1).max(h_min);
    let mut k1 = g(&y, t)?;
    while t < total {
        if t + h > total {
            h = total - t;
        }
        let mut k = [[0.0; D]; 7];
        k[0] = k1;
        for s in 0..6 {
            let mut ys = y;
            for (r, kr) in k.iter().enumerate().take(s + 1) {
                let a = DP_A[s][r];
                if a != 0.0 {
                    for i in 0..D {
                        ys[i] += h * a * kr[i];
                    }
                }
            }
            k[s + 1] = g(&ys, t + h)?;
        }
        // k[6] was evaluated at the 5th-order solution (FSAL).
        let mut y_new = y;
        for (r, kr) in k.iter().enumerate().take(6) {
            let b = DP_A[5][r];
            for i in 0..D {
                y_new[i] += h * b * kr[i];
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..D {
            let mut e = 0.0;
            for (r, kr) in k.iter().enumerate() {
                e += DP_E[r] * kr[i];
            }
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e).abs() / sc);
        }
        if err <= 1.0 || h <= h_min {
            if err > 1.0 {
                return Err(Error::IntegrationFailure {
                    time: dir * t,
                    state: [y[0], y[1]],
                    reason: format!("step size underflow (h = {h:.3e})"),
                });
            }
            t += h;
            check_finite(dir * t, &y_new, &y)?;
            y = y_new;
            k1 = k[6];
            obs(dir * t, &y);
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * fac).max(h_min);
    }
    Ok(y)
}

/// Integrate `y' = f(y)` from 0 to `t` (either sign). Backward time is the
/// forward flow of `-f`. `obs` receives `(signed time, state)` after every
/// step and at the start.
pub(crate) fn integrate<const D: usize, F, O>(
    f: &F,
    y0: [f64; D],
    t: f64,
    ctrl: StepControl,
    mut obs: O,
) -> Result<[f64; D]>
where
    F: Fn(&[f64; D]) -> [f64; D],
    O: FnMut(f64, &[f64; D]),
{
    ctrl.validate()?;
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite time {t}")));
    }
    match ctrl {
        StepControl::Fixed { h } => {
            let dir = if t < 0.0 { -1.0 } else { 1.0 };
            let n = ((t.abs() / h) - 1e-9).ceil().max(0.0) as usize;
            let mut y = y0;
            obs(0.0, &y);
            if n == 0 {
                return Ok(y);
            }
            let he = t.abs() / n as f64;
            let g = |y: &[f64; D]| {
                let mut v = f(y);
                if dir < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            };
            for i in 1..=n {
                let next = rk4_step(&g, &y, he);
                check_finite(dir * he * i as f64, &next, &y)?;
                y = next;
                obs(dir * he * i as f64, &y);
            }
            Ok(y)
        }
        StepControl::Adaptive { rtol, atol, h_min } => {
            dp45(&|y: &[f64; D]| Ok(f(y)), y0, t, rtol, atol, h_min, obs)
        }
    }
}

/// States at `t = k·dt`, `k = 0..=n` (dt of either sign), using RK4 substeps of
/// size `dt / ceil(|dt|/h)`, or adaptive segments.
pub(crate) fn lattice<const D: usize, F>(
    f: &F,
    y0: [f64; D],
    dt: f64,
    n: usize,
    ctrl: StepControl,
) -> Result<Vec<[f64; D]>>
where
    F: Fn(&[f64; D]) -> [f64; D],
{
    ctrl.validate()?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(y0);
    let mut y = y0;
    match ctrl {
        StepControl::Fixed { h } => {
            let sub = ((dt.abs() / h) - 1e-9).ceil().max(1.0) as usize;
            let he = dt / sub as f64;
            for k in 1..=n {
                let last = y;
                for _ in 0..sub {
                    y = rk4_step(f, &y, he);
                }
                check_finite(dt * k as f64, &y, &last)?;
                out.push(y);
            }
        }
        StepControl::Adaptive { .. } => {
            for _ in 1..=n {
                y = integrate(f, y, dt, ctrl, |_, _| {})?;
                out.push(y);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Right-hand sides

pub(crate) fn position_rhs(u: &TrigVelocityField) -> impl Fn(&[f64; 2]) -> [f64; 2] + '_ {
    move |y| u.velocity(y)
}

/// State `(x, M)` with `M` row-major.
pub(crate) fn tangent_rhs(u: &TrigVelocityField) -> impl Fn(&[f64; 6]) -> [f64; 6] + '_ {
    move |y| {
        let (v, du) = u.eval1(&[y[0], y[1]]);
        let m = [[y[2], y[3]], [y[4], y[5]]];
        let dm = mat2::mul(&du, &m);
        [v[0], v[1], dm[0][0], dm[0][1], dm[1][0], dm[1][1]]
    }
}

/// State `(x, M, M2)`, `M2[i][j][k]` flattened as `6 + 4i + 2j + k`.
pub(crate) fn second_rhs(u: &TrigVelocityField) -> impl Fn(&[f64; 14]) -> [f64; 14] + '_ {
    move |y| {
        let (v, du, d2) = u.eval2(&[y[0], y[1]]);
        let m = [[y[2], y[3]], [y[4], y[5]]];
        let dm = mat2::mul(&du, &m);
        let mut out = [0.0; 14];
        out[0] = v[0];
        out[1] = v[1];
        out[2] = dm[0][0];
        out[3] = dm[0][1];
        out[4] = dm[1][0];
        out[5] = dm[1][1];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += du[i][l] * y[6 + 4 * l + 2 * j + k];
                        for n in 0..2 {
                            s += d2[i][l][n] * m[l][j] * m[n][k];
                        }
                    }
                    out[6 + 4 * i + 2 * j + k] = s;
                }
            }
        }
        out
    }
}

pub(crate) fn tangent_init(x: &Vec2) -> [f64; 6] {
    [x[0], x[1], 1.0, 0.0, 0.0, 1.0]
}

pub(crate) fn unpack_tangent(y: &[f64; 6]) -> (Vec2, Mat2) {
    ([y[0], y[1]], [[y[2], y[3]], [y[4], y[5]]])
}

fn unpack_second(y: &[f64; 14]) -> Tensor2 {
    let mut t = mat2::ZERO_T;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                t[i][j][k] = y[6 + 4 * i + 2 * j + k];
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Trajectories

/// Sampled trajectory with cubic Hermite dense output.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Unwrapped positions.
    pub states: Vec<Vec2>,
    derivs: Vec<Vec2>,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end(&self) -> TorusPoint {
        TorusPoint::from_array(self.end_lifted())
    }

    pub fn end_lifted(&self) -> Vec2 {
        *self.states.last().unwrap()
    }

    /// Interpolated position at `t` between 0 and the end time.
    pub fn at(&self, t: f64) -> Result<TorusPoint> {
        let (lo, hi) = {
            let a = self.times[0];
            let b = self.end_time();
            (a.min(b), a.max(b))
        };
        if t < lo - 1e-12 || t > hi + 1e-12 {
            return Err(Error::InvalidInput(format!("t = {t} outside [{lo}, {hi}]")));
        }
        let forward = self.end_time() >= 0.0;
        let i = if forward {
            self.times.partition_point(|&s| s < t)
        } else {
            self.times.partition_point(|&s| s > t)
        };
        if i == 0 {
            return Ok(TorusPoint::from_array(self.states[0]));
        }
        let i = i.min(self.times.len() - 1);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (h00, h10, h01, h11) = (
            2.0 * s * s * s - 3.0 * s * s + 1.0,
            s * s * s - 2.0 * s * s + s,
            -2.0 * s * s * s + 3.0 * s * s,
            s * s * s - s * s,
        );
        let (p0, p1, m0, m1) = (self.states[i - 1], self.states[i], self.derivs[i - 1], self.derivs[i]);
        let p = [
            h00 * p0[0] + h10 * h * m0[0] + h01 * p1[0] + h11 * h * m1[0],
            h00 * p0[1] + h10 * h * m0[1] + h01 * p1[1] + h11 * h * m1[1],
        ];
        Ok(TorusPoint::from_array(p))
    }
}

/// Integrate `∂ₜx = u(x)` from `x₀` for time `t` (either sign).
pub fn advance(u: &TrigVelocityField, x0: &TorusPoint, t: f64, ctrl: StepControl) -> Result<Trajectory> {
    let f = position_rhs(u);
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
    };
    integrate(&f, x0.as_array(), t, ctrl, |s, y| {
        traj.times.push(s);
        traj.states.push(*y);
        traj.derivs.push(u.velocity(y));
    })?;
    Ok(traj)
}

/// Endpoint of the flow on the cover, without storing the path.
pub fn flow_lifted(u: &TrigVelocityField, x: Vec2, t: f64, ctrl: StepControl) -> Result<Vec2> {
    integrate(&position_rhs(u), x, t, ctrl, |_, _| {})
}

/// `(φ_t, Dφ_t, D²φ_t)` at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleState {
    pub position: TorusPoint,
    pub m: Mat2,
    pub m2: Option<Tensor2>,
    pub time: f64,
}

impl CocycleState {
    pub fn det(&self) -> f64 {
        mat2::det(&self.m)
    }
}

/// Solve `∂ₜM = Du(φ_t x₀) M`, `M(0) = I`.
pub fn tangent_flow(u: &TrigVelocityField, x0: &TorusPoint, t: f64, ctrl: StepControl) -> Result<CocycleState> {
    let (x, m) = tangent_lifted(u, x0.as_array(), t, ctrl)?;
    Ok(CocycleState {
        position: TorusPoint::from_array(x),
        m,
        m2: None,
        time: t,
    })
}

/// Tangent flow on the cover: `(φ_t x, Dφ_t(x))`.
pub fn tangent_lifted(u: &TrigVelocityField, x: Vec2, t: f64, ctrl: StepControl) -> Result<(Vec2, Mat2)> {
    let y = integrate(&tangent_rhs(u), tangent_init(&x), t, ctrl, |_, _| {})?;
    Ok(unpack_tangent(&y))
}

/// Cocycle states at `t = k·dt`, `k = 0..=n`.
pub fn tangent_samples(
    u: &TrigVelocityField,
    x0: &TorusPoint,
    dt: f64,
    n: usize,
    ctrl: StepControl,
) -> Result<Vec<CocycleState>> {
    let ys = lattice(&tangent_rhs(u), tangent_init(&x0.as_array()), dt, n, ctrl)?;
    Ok(ys
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let (x, m) = unpack_tangent(y);
            CocycleState {
                position: TorusPoint::from_array(x),
                m,
                m2: None,
                time: dt * k as f64,
            }
        })
        .collect())
}

/// Solve the second variational equation
/// `∂ₜM₂ = Du·M₂ + D²u(M·, M·)`, `M₂(0) = 0`, alongside `M`.
pub fn second_variation(u: &TrigVelocityField, x0: &TorusPoint, t: f64, ctrl: StepControl) -> Result<CocycleState> {
    let mut y0 = [0.0; 14];
    y0[..6].copy_from_slice(&tangent_init(&x0.as_array()));
    let y = integrate(&second_rhs(u), y0, t, ctrl, |_, _| {})?;
    let (x, m) = unpack_tangent(&[y[0], y[1], y[2], y[3], y[4], y[5]]);
    Ok(CocycleState {
        position: TorusPoint::from_array(x),
        m,
        m2: Some(unpack_second(&y)),
        time: t,
    })
}

/// CSV `t,x1,x2,m11,m12,m21,m22,det`.
pub fn trajectory_csv(states: &[CocycleState]) -> String {
    let mut s = String::from("t,x1,x2,m11,m12,m21,m22,det\n");
    for c in states {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            crate::fmt_float(c.time),
            crate::fmt_float(c.position.x1),
            crate::fmt_float(c.position.x2),
            crate::fmt_float(c.m[0][0]),
            crate::fmt_float(c.m[0][1]),
            crate::fmt_float(c.m[1][0]),
            crate::fmt_float(c.m[1][1]),
            crate::fmt_float(c.det()),
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Transverse flow

/// Relative speed floor for the transverse flow.
pub const TRANSVERSE_FLOOR: f64 = 1e-6;
const TRANSVERSE_TOL: f64 = 1e-12;

fn transverse_rhs(u: &TrigVelocityField, floor: f64) -> impl Fn(&[f64; 2]) -> Result<[f64; 2]> + '_ {
    move |y| {
        let v = u.velocity(y);
        let s2 = mat2::dot(&v, &v);
        let speed = s2.sqrt();
        if speed < floor {
            return Err(Error::StagnationProximity { tau: 0.0, speed, floor });
        }
        let p = mat2::perp(&v);
        Ok([p[0] / s2, p[1] / s2])
    }
}

fn transverse_floor(u: &TrigVelocityField) -> f64 {
    TRANSVERSE_FLOOR * u.max_speed()
}

/// `ψ_τ(x₀)` for `∂_τψ = u⊥/|u|²`.
pub fn transverse_flow(u: &TrigVelocityField, x0: &TorusPoint, tau: f64) -> Result<TorusPoint> {
    transverse_path(u, x0.as_array(), &[tau]).map(|v| TorusPoint::from_array(v[0]))
}

/// `ψ_τ(x₀)` on the cover for each requested `τ`, continuing the integration
/// monotonically away from 0 in each direction.
pub fn transverse_path(u: &TrigVelocityField, x0: Vec2, taus: &[f64]) -> Result<Vec<Vec2>> {
    if taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite tau".into()));
    }
    let floor = transverse_floor(u);
    let f = transverse_rhs(u, floor);
    f(&x0)?;
    let mut out = vec![[0.0; 2]; taus.len()];
    for sign in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..taus.len())
            .filter(|&i| if sign > 0.0 { taus[i] >= 0.0 } else { taus[i] < 0.0 })
            .collect();
        idx.sort_by(|&a, &b| taus[a].abs().partial_cmp(&taus[b].abs()).unwrap());
        let mut y = x0;
        let mut at = 0.0;
        for i in idx {
            let d = taus[i] - at;
            y = dp45(&f, y, d, TRANSVERSE_TOL, TRANSVERSE_TOL, 1e-14, |_, _| {}).map_err(|e| match e {
                Error::StagnationProximity { tau, speed, floor } => Error::StagnationProximity {
                    tau: at + tau,
                    speed,
                    floor,
                },
                e => e,
            })?;
            at = taus[i];
            out[i] = y;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Streamline chart

/// Lattice resolution for [`build_chart`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChartResolution {
    /// Number of τ samples including both ends; odd so that τ = 0 is a sample.
    pub tau_samples: usize,
    /// Number of t intervals on `[-N, N]`; `None` selects `max(400, 100N)`.
    pub t_intervals: Option<usize>,
    pub step: StepControl,
}

impl Default for ChartResolution {
    fn default() -> Self {
        ChartResolution {
            tau_samples: 41,
            t_intervals: None,
            step: StepControl::default(),
        }
    }
}

impl ChartResolution {
    /// Even number of t intervals used for half-length `n`.
    pub fn t_intervals_for(&self, n: f64) -> usize {
        let k = self
            .t_intervals
            .unwrap_or_else(|| (100.0 * n).ceil().max(400.0) as usize);
        k + (k % 2)
    }
}

/// Samples of `H(t,τ) = φ_t(ψ_τ(x₀))` on a `(t, τ)` lattice over
/// `[-N, N] × [-s, s]`. Arrays are indexed `j·n_t + i` for `τ_j`, `t_i`.
#[derive(Clone, Debug, Serialize)]
pub struct StripChart {
    pub base_point: TorusPoint,
    pub half_length: f64,
    pub half_width: f64,
    pub ts: Vec<f64>,
    pub taus: Vec<f64>,
    /// `H` on the cover.
    pub points: Vec<Vec2>,
    pub dh_inv_t: Vec<Mat2>,
    pub det_dh: Vec<f64>,
    /// `u⊥(H)` evaluated directly from the velocity field.
    pub u_perp: Vec<Vec2>,
    /// `ψ_τ(x₀)` on the cover.
    pub transversal: Vec<Vec2>,
    pub injectivity_ok: bool,
    /// Return events `(t, τ)` that make the chart non-injective.
    pub overlaps: Vec<(f64, f64)>,
    /// Prime period of the base point when it was checked.
    pub base_period: Option<Period>,
}

impl StripChart {
    pub fn n_t(&self) -> usize {
        self.ts.len()
    }

    pub fn n_tau(&self) -> usize {
        self.taus.len()
    }

    pub fn idx(&self, i_t: usize, j_tau: usize) -> usize {
        j_tau * self.ts.len() + i_t
    }

    pub fn point(&self, i_t: usize, j_tau: usize) -> TorusPoint {
        TorusPoint::from_array(self.points[self.idx(i_t, j_tau)])
    }

    pub fn dt(&self) -> f64 {
        self.ts[1] - self.ts[0]
    }

    pub fn dtau(&self) -> f64 {
        if self.taus.len() > 1 {
            self.taus[1] - self.taus[0]
        } else {
            0.0
        }
    }

    pub fn max_det_error(&self) -> f64 {
        self.det_dh.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max |DH⁻ᵀe₂ − u⊥∘H| / |u⊥∘H|`.
    pub fn max_identity_error(&self) -> f64 {
        self.dh_inv_t
            .iter()
            .zip(&self.u_perp)
            .map(|(a, p)| {
                let col = [a[0][1], a[1][1]];
                let d = [col[0] - p[0], col[1] - p[1]];
                mat2::norm(&d) / mat2::norm(p).max(1e-300)
            })
            .fold(0.0, f64::max)
    }

    /// CSV `t,tau,h1,h2,detDH`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,tau,h1,h2,detDH\n");
        for j in 0..self.n_tau() {
            for i in 0..self.n_t() {
                let k = self.idx(i, j);
                let p = TorusPoint::from_array(self.points[k]);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    crate::fmt_float(self.ts[i]),
                    crate::fmt_float(self.taus[j]),
                    crate::fmt_float(p.x1),
                    crate::fmt_float(p.x2),
                    crate::fmt_float(self.det_dh[k]),
                );
            }
        }
        s
    }
}

/// `A⁻ᵀ` through the adjugate, for matrices with unit determinant.
fn adjugate_transpose(a: &Mat2) -> Mat2 {
    [[a[1][1], -a[1][0]], [-a[0][1], a[0][0]]]
}

fn chart_lattice(u: &TrigVelocityField, x0: &TorusPoint, n: f64, s: f64, res: &ChartResolution) -> Result<StripChart> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidInput(format!("half-length N = {n} must be positive")));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidInput(format!("half-width s = {s} must be positive")));
    }
    if res.tau_samples < 2 {
        return Err(Error::InvalidInput("need at least two tau samples".into()));
    }
    res.step.validate()?;
    let nt = res.t_intervals_for(n);
    let half = nt / 2;
    let dt = n / half as f64;
    let ts: Vec<f64> = (0..=nt).map(|i| -n + dt * i as f64).collect();
    let taus: Vec<f64> = (0..res.tau_samples)
        .map(|j| -s + 2.0 * s * j as f64 / (res.tau_samples - 1) as f64)
        .collect();
    let transversal = transverse_path(u, x0.as_array(), &taus)?;

    let f = tangent_rhs(u);
    let n_t = ts.len();
    let mut points = vec![[0.0; 2]; n_t * taus.len()];
    let mut dh = vec![mat2::ZERO; n_t * taus.len()];
    let mut det = vec![0.0; n_t * taus.len()];
    let mut up = vec![[0.0; 2]; n_t * taus.len()];
    for (j, b) in transversal.iter().enumerate() {
        let ub = u.velocity(b);
        let ub2 = mat2::dot(&ub, &ub);
        let c_inv_t: Mat2 = [[ub[0] / ub2, -ub[1]], [ub[1] / ub2, ub[0]]];
        let fwd = lattice(&f, tangent_init(b), dt, half, res.step)?;
        let bwd = lattice(&f, tangent_init(b), -dt, half, res.step)?;
        for i in 0..n_t {
            let y = if i >= half { &fwd[i - half] } else { &bwd[half - i] };
            let (x, m) = unpack_tangent(y);
            let k = j * n_t + i;
            points[k] = x;
            dh[k] = mat2::mul(&adjugate_transpose(&m), &c_inv_t);
            det[k] = mat2::det(&m);
            up[k] = mat2::perp(&u.velocity(&x));
        }
    }
    Ok(StripChart {
        base_point: *x0,
        half_length: n,
        half_width: s,
        ts,
        taus,
        points,
        dh_inv_t: dh,
        det_dh: det,
        u_perp: up,
        transversal,
        injectivity_ok: false,
        overlaps: Vec::new(),
        base_period: None,
    })
}

fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let cross = |o: Vec2, p: Vec2, q: Vec2| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0
}

/// Times `t ∈ (0, horizon]` at which the forward orbit of each transversal
/// point crosses the transversal polyline again, as `(t, τ)` pairs.
///
/// `H(t,τ) = H(t',τ')` with `t ≠ t'` forces `φ_{t−t'}(ψ_τ x₀) = ψ_{τ'} x₀`,
/// so the chart on `[-N, N]` is injective iff no such return happens within
/// `2N`.
pub fn transversal_returns(
    u: &TrigVelocityField,
    transversal: &[Vec2],
    taus: &[f64],
    dt: f64,
    horizon: f64,
    ctrl: StepControl,
) -> Result<Vec<(f64, f64)>> {
    // Segment 0 starts on the transversal itself.
    let hits = orbit_crossings(u, transversal, transversal, dt, horizon, ctrl, 1)?;
    Ok(hits.into_iter().map(|(t, j)| (t, taus[j])).collect())
}

/// Crossings of the orbits of `sources` (over `t` from 0 to `horizon` in
/// steps of `dt`, either sign) with the polyline `target`, as
/// `(t, source index)`. The first `skip` segments of each orbit are ignored.
pub fn orbit_crossings(
    u: &TrigVelocityField,
    sources: &[Vec2],
    target: &[Vec2],
    dt: f64,
    horizon: f64,
    ctrl: StepControl,
    skip: usize,
) -> Result<Vec<(f64, usize)>> {
    let steps = (horizon / dt.abs()).ceil() as usize;
    let centre = target[target.len() / 2];
    let radius = target
        .iter()
        .map(|p| (p[0] - centre[0]).hypot(p[1] - centre[1]))
        .fold(0.0, f64::max);
    let f = position_rhs(u);
    let mut hits = Vec::new();
    for (j, b) in sources.iter().enumerate() {
        let path = lattice(&f, *b, dt, steps, ctrl)?;
        for k in skip..path.len() - 1 {
            let p = path[k];
            let q = path[k + 1];
            let seg = (q[0] - p[0]).hypot(q[1] - p[1]);
            let off = [wrap_signed(p[0] - centre[0]), wrap_signed(p[1] - centre[1])];
            if off[0].hypot(off[1]) > radius + seg + 1e-12 {
                continue;
            }
            let a = [centre[0] + off[0], centre[1] + off[1]];
            let bq = [a[0] + q[0] - p[0], a[1] + q[1] - p[1]];
            let crossed = target.windows(2).any(|w| segments_intersect(a, bq, w[0], w[1]));
            if crossed {
                hits.push((dt * k as f64, j));
            }
        }
    }
    Ok(hits)
}

/// Whether the strips of two charts with equal half-length are disjoint:
/// no orbit from the transversal of `b` meets the transversal of `a` within
/// `|t| ≤ 2N`.
pub fn strips_disjoint(u: &TrigVelocityField, a: &StripChart, b: &StripChart, step: StepControl) -> Result<bool> {
    let horizon = a.half_length + b.half_length;
    for dt in [a.dt(), -a.dt()] {
        if !orbit_crossings(u, &b.transversal, &a.transversal, dt, horizon, step, 0)?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn certify(u: &TrigVelocityField, chart: &mut StripChart, step: StepControl) -> Result<()> {
    let hits = transversal_returns(
        u,
        &chart.transversal,
        &chart.taus,
        chart.dt(),
        2.0 * chart.half_length,
        step,
    )?;
    chart.injectivity_ok = hits.is_empty();
    chart.overlaps = hits;
    Ok(())
}

/// Chart without the period precondition; the injectivity certificate is
/// computed but a failure only clears `injectivity_ok`.
pub fn sample_chart(u: &TrigVelocityField, x0: &TorusPoint, n: f64, s: f64, res: &ChartResolution) -> Result<StripChart> {
    let mut chart = chart_lattice(u, x0, n, s, res)?;
    certify(u, &mut chart, res.step)?;
    Ok(chart)
}

/// Horizon used when checking `p(x₀) > 3N`.
pub fn period_horizon(n: f64) -> f64 {
    3.0 * n * 1.05 + 1.0
}

/// Check `p(x₀) > 3N`. Stagnation points and short periods are rejected.
pub fn check_period(u: &TrigVelocityField, x0: &TorusPoint, n: f64) -> Result<Period> {
    let est = orbits::prime_period(u, x0, period_horizon(n), orbits::DEFAULT_RETURN_TOL)?;
    match est.period {
        Period::Stagnation => Err(Error::PeriodViolation {
            period: 0.0,
            required: 3.0 * n,
        }),
        Period::Finite(p) if p <= 3.0 * n => Err(Error::PeriodViolation {
            period: p,
            required: 3.0 * n,
        }),
        p => Ok(p),
    }
}

/// Build the strip chart after checking `p(x₀) > 3N`; errors when the
/// injectivity certificate fails.
pub fn build_chart(u: &TrigVelocityField, x0: &TorusPoint, n: f64, s: f64, res: &ChartResolution) -> Result<StripChart> {
    let period = check_period(u, x0, n)?;
    let mut chart = sample_chart(u, x0, n, s, res)?;
    chart.base_period = Some(period);
    if !chart.injectivity_ok {
        return Err(Error::ChartOverlap {
            pairs: chart.overlaps.clone(),
        });
    }
    Ok(chart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::presets::*;
    use std::f64::consts::PI;

    #[test]
    fn rigid_translation() {
        let e = advance(&rigid(), &TorusPoint::new(0.0, 0.0), 1.0, StepControl::default())
            .unwrap()
            .end();
        assert!((e.x1 - 1.0).abs() < 1e-13 && e.x2.abs() < 1e-13);
    }

    #[test]
    fn shear_closed_form() {
        let t0 = 7.3;
        let e = advance(&shear(), &TorusPoint::new(0.0, PI / 2.0), t0, StepControl::default())
            .unwrap()
            .end();
        assert!((e.x1 - t0 % (2.0 * PI)).abs() < 1e-12);
        assert!((e.x2 - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cellular_separatrix_invariant() {
        let traj = advance(&cellular(), &TorusPoint::new(1.0, 0.0), 10.0, StepControl::default()).unwrap();
        assert!(traj.states.iter().all(|p| p[1] == 0.0));
    }

    #[test]
    fn time_reversibility_and_dense_output() {
        let u = cellular();
        let x0 = TorusPoint::new(0.3, 0.4);
        let fwd = advance(&u, &x0, 3.0, StepControl::default()).unwrap();
        let back = advance(&u, &fwd.end(), -3.0, StepControl::default()).unwrap().end();
        assert!(back.distance(&x0) < 1e-10);
        let mid = fwd.at(1.2345).unwrap();
        let direct = advance(&u, &x0, 1.2345, StepControl::default()).unwrap().end();
        assert!(mid.distance(&direct) < 1e-9);
        let ad = advance(&u, &x0, 3.0, StepControl::adaptive(1e-11)).unwrap().end();
        assert!(ad.distance(&fwd.end()) < 1e-8);
    }

    #[test]
    fn tangent_examples() {
        let c = tangent_flow(&cellular(), &TorusPoint::new(0.0, 0.0), 3.0, StepControl::default()).unwrap();
        assert!((c.m[0][0] - (-3.0f64).exp()).abs() < 1e-12);
        assert!((c.m[1][1] - 3.0f64.exp()).abs() < 1e-9);
        assert!(c.m[0][1].abs() < 1e-15 && c.m[1][0].abs() < 1e-15);
        let r = tangent_flow(&rigid(), &TorusPoint::new(1.0, 2.0), 5.0, StepControl::default()).unwrap();
        assert_eq!(r.m, mat2::IDENTITY);
        let x2 = 0.7;
        let t = 4.0;
        let s = tangent_flow(&shear(), &TorusPoint::new(0.2, x2), t, StepControl::default()).unwrap();
        assert!((s.m[0][1] - t * x2.cos()).abs() < 1e-12);
        assert!((s.m[0][0] - 1.0).abs() < 1e-14 && (s.m[1][1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn second_variation_rigid_is_zero() {
        let c = second_variation(&rigid(), &TorusPoint::new(0.5, 0.5), 3.0, StepControl::default()).unwrap();
        assert_eq!(c.m2.unwrap(), mat2::ZERO_T);
    }

    #[test]
    fn transverse_examples() {
        let p = transverse_flow(&rigid(), &TorusPoint::new(0.0, 0.0), 0.3).unwrap();
        assert!(p.x1.abs() < 1e-14 && (p.x2 - 0.3).abs() < 1e-12);
        let q = transverse_flow(&shear(), &TorusPoint::new(1.0, PI / 2.0), -0.01).unwrap();
        assert!((q.x1 - 1.0).abs() < 1e-14);
        assert!((q.x2 - (PI / 2.0 - 0.01)).abs() < 1e-6);
        let delta = 0.1;
        let tau = 1e-6;
        let r = transverse_flow(&cellular(), &TorusPoint::new(delta, 0.0), tau).unwrap();
        let speed = r.distance(&TorusPoint::new(delta, 0.0)) / tau;
        assert!((speed - 1.0 / delta.sin()).abs() / speed < 1e-5);
        assert!(matches!(
            transverse_flow(&cellular(), &TorusPoint::new(0.0, 0.0), 0.1),
            Err(Error::StagnationProximity { .. })
        ));
    }

    #[test]
    fn rigid_chart_is_identity_but_not_injective() {
        let res = ChartResolution {
            tau_samples: 5,
            t_intervals: Some(40),
            step: StepControl::default(),
        };
        let c = sample_chart(&rigid(), &TorusPoint::new(0.0, 0.0), 4.0, 0.1, &res).unwrap();
        for j in 0..c.n_tau() {
            for i in 0..c.n_t() {
                let p = c.points[c.idx(i, j)];
                assert!((p[0] - c.ts[i]).abs() < 1e-12 && (p[1] - c.taus[j]).abs() < 1e-12);
            }
        }
        assert_eq!(c.max_det_error(), 0.0);
        assert!(!c.injectivity_ok);
        assert!(matches!(
            build_chart(&rigid(), &TorusPoint::new(0.0, 0.0), 4.0, 0.1, &res),
            Err(Error::PeriodViolation { .. })
        ));
    }

    #[test]
    fn shear_chart_example() {
        let c = build_chart(&shear(), &TorusPoint::new(0.0, PI / 2.0), 2.0, 0.05, &ChartResolution::default()).unwrap();
        assert!(c.injectivity_ok);
        assert!(c.max_det_error() <= 1e-8);
        assert!(c.max_identity_error() <= 1e-8);
    }

    #[test]
    fn cellular_chart_example() {
        let u = cellular();
        let c = build_chart(&u, &TorusPoint::new(0.1, 0.0), 6.0, 1e-3, &ChartResolution::default()).unwrap();
        assert!(c.injectivity_ok);
        assert!(c.max_det_error() <= 1e-4);
        assert!(c.max_identity_error() <= 1e-6, "{}", c.max_identity_error());
        // H(t, 0) = φ_t(x₀) and H(0, τ) = ψ_τ(x₀).
        let j0 = c.n_tau() / 2;
        let i0 = c.n_t() / 2;
        let direct = advance(&u, &c.base_point, c.ts[c.n_t() - 1], StepControl::default()).unwrap().end();
        assert!(c.point(c.n_t() - 1, j0).distance(&direct) < 1e-9);
        for j in 0..c.n_tau() {
            assert_eq!(c.points[c.idx(i0, j)], c.transversal[j]);
        }
    }

    #[test]
    fn segment_intersection() {
        assert!(segments_intersect([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
    }
}
