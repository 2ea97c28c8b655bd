//! Lyapunov exponents of the tangent cocycle, the global exponent `Λ`, the
//! bicharacteristic amplitude system and growth of higher differentials.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{self, StagnationKind, TorusPoint, TrigVelocityField, TWO_PI};
use crate::flow::{self, StepControl};
use crate::mat2::{self, Mat2, Vec2};
use crate::par::{self, Exec};
use crate::quad;

/// Re-normalization interval for running products.
pub const RENORM_DT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentEstimate {
    /// Largest exponent `λ₁`; the other one is `-λ₁`.
    pub value: f64,
    pub horizon: f64,
    /// `(t, t⁻¹ log σ_max(Dφ_t))`.
    pub trace: Vec<(f64, f64)>,
}

impl ExponentEstimate {
    pub fn lambda2(&self) -> f64 {
        -self.value
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("horizon {t} must be positive")))
    }
}

/// `(times, log σ_max(Dφ_t(x)))` on `t_k = k·T/n`, `n = ceil(T / RENORM_DT)`,
/// from a normalized running product of segment cocycles.
pub fn log_norm_series(u: &TrigVelocityField, x: Vec2, t: f64, ctrl: StepControl) -> Result<(Vec<f64>, Vec<f64>)> {
    check_horizon(t)?;
    let n = (t / RENORM_DT).ceil() as usize;
    let dt = t / n as f64;
    let f = flow::tangent_rhs(u);
    let mut pos = x;
    let mut p = mat2::IDENTITY;
    let mut scale = 0.0;
    let mut times = vec![0.0];
    let mut logs = vec![0.0];
    for k in 1..=n {
        let ys = flow::lattice(&f, flow::tangent_init(&pos), dt, 1, ctrl)?;
        let (next, seg) = flow::unpack_tangent(&ys[1]);
        pos = next;
        p = mat2::mul(&seg, &p);
        let nrm = mat2::spectral_norm(&p);
        scale += nrm.ln();
        p = [[p[0][0] / nrm, p[0][1] / nrm], [p[1][0] / nrm, p[1][1] / nrm]];
        times.push(dt * k as f64);
        logs.push(scale);
    }
    Ok((times, logs))
}

/// Top exponent at `x₀`: least-squares slope of `log σ_max(Dφ_t)` over the
/// last half of `[0, T]`.
pub fn exponent_at(u: &TrigVelocityField, x0: &TorusPoint, t: f64) -> Result<ExponentEstimate> {
    exponent_at_with(u, x0, t, StepControl::default())
}

pub fn exponent_at_with(u: &TrigVelocityField, x0: &TorusPoint, t: f64, ctrl: StepControl) -> Result<ExponentEstimate> {
    let (ts, ls) = log_norm_series(u, x0.as_array(), t, ctrl)?;
    let value = quad::ls_slope_from(&ts, &ls, 0.5 * t);
    let trace = ts.iter().zip(&ls).skip(1).map(|(a, b)| (*a, b / a)).collect();
    Ok(ExponentEstimate {
        value,
        horizon: t,
        trace,
    })
}

/// Exponents `±λ` at hyperbolic stagnation points and 0 at elliptic or
/// degenerate ones, sorted and deduplicated within `1e-10`.
pub fn stagnation_exponents(u: &TrigVelocityField) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in fields::stagnation_points(u).points {
        match p.kind {
            StagnationKind::Hyperbolic { lambda } => {
                out.push(lambda);
                out.push(-lambda);
            }
            _ => out.push(0.0),
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-10);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentSource {
    Grid,
    StagnationPoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalExponent {
    pub value: f64,
    pub source: ExponentSource,
    /// Max over the grid of the least-squares slope of `log ‖Dφ_t(x)‖` on
    /// `[T/2, T]`.
    pub grid_value: f64,
    /// `max_x T⁻¹ log ‖Dφ_T(x)‖` over the grid (includes the transient).
    pub grid_raw_value: f64,
    pub grid_argmax: TorusPoint,
    /// Largest exact exponent at a hyperbolic stagnation point.
    pub stagnation_value: Option<f64>,
    pub horizon: f64,
    pub grid_size: usize,
    /// `(t, max_x t⁻¹ log ‖Dφ_t(x)‖)`.
    pub trace: Vec<(f64, f64)>,
    /// Fitted exponent per grid point, row-major in `x₁`.
    pub field: Vec<(TorusPoint, f64)>,
}

impl GlobalExponent {
    /// CSV `x1,x2,lambda1`.
    pub fn field_csv(&self) -> String {
        let mut s = String::from("x1,x2,lambda1\n");
        for (p, l) in &self.field {
            let _ = writeln!(
                s,
                "{},{},{}",
                crate::fmt_float(p.x1),
                crate::fmt_float(p.x2),
                crate::fmt_float(*l)
            );
        }
        s
    }
}

fn grid_points(n: usize) -> Vec<TorusPoint> {
    let h = TWO_PI / n as f64;
    (0..n * n)
        .map(|k| TorusPoint::new(h * (k / n) as f64, h * (k % n) as f64))
        .collect()
}

/// `Λ` from a uniform grid of fitted exponents (slope of `log ‖Dφ_t(x)‖` over
/// the last half of the window), combined with the exact stagnation-point
/// exponents; the larger value is returned with its source.
pub fn global_exponent(u: &TrigVelocityField, t: f64, grid: usize) -> Result<GlobalExponent> {
    global_exponent_with(Exec::default(), u, t, grid, StepControl::default())
}

pub fn global_exponent_with(
    exec: Exec,
    u: &TrigVelocityField,
    t: f64,
    grid: usize,
    ctrl: StepControl,
) -> Result<GlobalExponent> {
    check_horizon(t)?;
    if grid < 16 {
        return Err(Error::InvalidInput(format!("grid size {grid} < 16")));
    }
    let pts = grid_points(grid);
    let series = par::map_slice(exec, &pts, |p| log_norm_series(u, p.as_array(), t, ctrl));
    let series = series.into_iter().collect::<Result<Vec<_>>>()?;
    let times = series[0].0.clone();
    let mut trace = Vec::with_capacity(times.len() - 1);
    for k in 1..times.len() {
        let m = series.iter().map(|s| s.1[k]).fold(f64::NEG_INFINITY, f64::max);
        trace.push((times[k], m / times[k]));
    }
    let field: Vec<(TorusPoint, f64)> = pts
        .iter()
        .zip(&series)
        .map(|(p, s)| (*p, quad::ls_slope_from(&s.0, &s.1, 0.5 * t)))
        .collect();
    let grid_raw_value = trace.last().map(|p| p.1).unwrap_or(0.0);
    let (grid_argmax, grid_value) = field
        .iter()
        .fold((pts[0], f64::NEG_INFINITY), |acc, (p, v)| if *v > acc.1 { (*p, *v) } else { acc });
    let stagnation_value = stagnation_exponents(u)
        .into_iter()
        .filter(|l| *l > 0.0)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |v| v.max(l))));
    let (value, source) = match stagnation_value {
        Some(s) if s >= grid_value => (s, ExponentSource::StagnationPoint),
        _ => (grid_value, ExponentSource::Grid),
    };
    Ok(GlobalExponent {
        value,
        source,
        grid_value,
        grid_raw_value,
        grid_argmax,
        stagnation_value,
        horizon: t,
        grid_size: grid,
        trace,
        field,
    })
}

// ---------------------------------------------------------------------------
// Bicharacteristic amplitude system

/// `ẋ = u`, `ξ̇ = -Duᵀξ`, `ḃ = -Du b + 2⟨Du b, ξ⟩ ξ/|ξ|²`; state `(x, ξ, b)`.
fn bas_rhs(u: &TrigVelocityField) -> impl Fn(&[f64; 6]) -> [f64; 6] + '_ {
    move |y| {
        let (v, du) = u.eval1(&[y[0], y[1]]);
        let xi = [y[2], y[3]];
        let b = [y[4], y[5]];
        let dxi = mat2::apply(&mat2::transpose(&du), &xi);
        let dub = mat2::apply(&du, &b);
        let c = 2.0 * mat2::dot(&dub, &xi) / mat2::dot(&xi, &xi);
        [
            v[0],
            v[1],
            -dxi[0],
            -dxi[1],
            -dub[0] + c * xi[0],
            -dub[1] + c * xi[1],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasSample {
    pub t: f64,
    pub x: TorusPoint,
    /// Directions are stored renormalized; true magnitudes are
    /// `|xi|·e^{log_xi_scale}` and `|b|·e^{log_b_scale}`.
    pub xi: Vec2,
    pub b: Vec2,
    pub log_xi_scale: f64,
    pub log_b_scale: f64,
    /// `log(|b||ξ|)` with scales included.
    pub log_integral: f64,
}

impl BasSample {
    pub fn log_xi(&self) -> f64 {
        mat2::norm(&self.xi).ln() + self.log_xi_scale
    }

    pub fn log_b(&self) -> f64 {
        mat2::norm(&self.b).ln() + self.log_b_scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasTrajectory {
    pub samples: Vec<BasSample>,
    /// `max_t ||b(t)||ξ(t)| − |b₀||ξ₀|| / (|b₀||ξ₀|)` on un-renormalized values.
    pub first_integral_drift: f64,
    /// Times at which `ξ` or `b` was rescaled.
    pub renormalizations: Vec<f64>,
}

impl BasTrajectory {
    pub fn last(&self) -> &BasSample {
        self.samples.last().unwrap()
    }

    /// CSV `t,b1,b2,xi1,xi2,integral`, with `b` and `ξ` un-renormalized.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,b1,b2,xi1,xi2,integral\n");
        for p in &self.samples {
            let eb = p.log_b_scale.exp();
            let ex = p.log_xi_scale.exp();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                crate::fmt_float(p.t),
                crate::fmt_float(p.b[0] * eb),
                crate::fmt_float(p.b[1] * eb),
                crate::fmt_float(p.xi[0] * ex),
                crate::fmt_float(p.xi[1] * ex),
                crate::fmt_float(p.log_integral.exp()),
            );
        }
        s
    }
}

const RENORM_HI: f64 = 1e50;
const RENORM_LO: f64 = 1e-50;

/// Integrate the amplitude system from `(x₀, ξ₀, b₀)` with `|ξ₀| = |b₀| = 1`
/// and `ξ₀ ⊥ b₀`, sampling every `sample_dt`.
pub fn bas_trajectory(
    u: &TrigVelocityField,
    x0: &TorusPoint,
    xi0: Vec2,
    b0: Vec2,
    t: f64,
) -> Result<BasTrajectory> {
    bas_trajectory_with(u, x0, xi0, b0, t, 0.5, StepControl::default())
}

pub fn bas_trajectory_with(
    u: &TrigVelocityField,
    x0: &TorusPoint,
    xi0: Vec2,
    b0: Vec2,
    t: f64,
    sample_dt: f64,
    ctrl: StepControl,
) -> Result<BasTrajectory> {
    check_horizon(t)?;
    let tol = 1e-12;
    if (mat2::norm(&xi0) - 1.0).abs() > tol || (mat2::norm(&b0) - 1.0).abs() > tol {
        return Err(Error::InvalidInput("need |xi0| = |b0| = 1".into()));
    }
    if mat2::dot(&xi0, &b0).abs() > tol {
        return Err(Error::InvalidInput("need xi0 orthogonal to b0".into()));
    }
    let n = (t / sample_dt).ceil().max(1.0) as usize;
    let dt = t / n as f64;
    let f = bas_rhs(u);
    let mut y = [x0.x1, x0.x2, xi0[0], xi0[1], b0[0], b0[1]];
    let (mut sx, mut sb) = (0.0, 0.0);
    let mut renorms = Vec::new();
    let sample = |tk: f64, y: &[f64; 6], sx: f64, sb: f64| {
        let xi = [y[2], y[3]];
        let b = [y[4], y[5]];
        BasSample {
            t: tk,
            x: TorusPoint::new(y[0], y[1]),
            xi,
            b,
            log_xi_scale: sx,
            log_b_scale: sb,
            log_integral: mat2::norm(&xi).ln() + sx + mat2::norm(&b).ln() + sb,
        }
    };
    let mut samples = vec![sample(0.0, &y, sx, sb)];
    let mut drift: f64 = 0.0;
    for k in 1..=n {
        let ys = flow::lattice(&f, y, dt, 1, ctrl)?;
        y = ys[1];
        let s = sample(dt * k as f64, &y, sx, sb);
        drift = drift.max(s.log_integral.exp_m1().abs());
        samples.push(s);
        let nx = (y[2] * y[2] + y[3] * y[3]).sqrt();
        let nb = (y[4] * y[4] + y[5] * y[5]).sqrt();
        if !(RENORM_LO..=RENORM_HI).contains(&nx) || !(RENORM_LO..=RENORM_HI).contains(&nb) {
            // b's equation is 0-homogeneous in ξ and linear in b.
            y[2] /= nx;
            y[3] /= nx;
            y[4] /= nb;
            y[5] /= nb;
            sx += nx.ln();
            sb += nb.ln();
            renorms.push(dt * k as f64);
        }
    }
    Ok(BasTrajectory {
        samples,
        first_integral_drift: drift,
        renormalizations: renorms,
    })
}

/// Initial data for amplitude-system sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BasSampleSpec {
    /// Include each hyperbolic stagnation point with `ξ₀` along both
    /// eigenvectors of `Du(y)ᵀ`.
    pub stagnation: bool,
    /// Uniformly random `x₀` and angle of `ξ₀`.
    pub random: usize,
    pub seed: u64,
}

impl Default for BasSampleSpec {
    fn default() -> Self {
        BasSampleSpec {
            stagnation: true,
            random: 42,
            seed: 7,
        }
    }
}

/// Initial data `(x₀, ξ₀, b₀)` with `b₀ = ξ₀⊥`.
pub fn bas_samples(u: &TrigVelocityField, spec: &BasSampleSpec) -> Vec<(TorusPoint, Vec2, Vec2)> {
    let mut out = Vec::new();
    if spec.stagnation {
        for p in fields::stagnation_points(u).hyperbolic() {
            let at = mat2::transpose(&p.jacobian);
            if let StagnationKind::Hyperbolic { lambda } = p.kind {
                for l in [-lambda, lambda] {
                    let v = mat2::eigenvector(&at, l);
                    let n = mat2::norm(&v);
                    let xi = [v[0] / n, v[1] / n];
                    out.push((p.location, xi, mat2::perp(&xi)));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.random {
        let x = TorusPoint::new(rng.gen::<f64>() * TWO_PI, rng.gen::<f64>() * TWO_PI);
        let th = rng.gen::<f64>() * TWO_PI;
        let xi = [th.cos(), th.sin()];
        out.push((x, xi, mat2::perp(&xi)));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct BasExponent {
    pub value: f64,
    pub horizon: f64,
    pub weight_index: i32,
    pub argmax: usize,
    /// `(x₀, ξ₀, exponent)` per sample.
    pub per_sample: Vec<(TorusPoint, Vec2, f64)>,
    pub max_drift: f64,
}

/// `μ = max over samples of T⁻¹ log |b(T)|`.
pub fn bas_max_exponent(u: &TrigVelocityField, spec: &BasSampleSpec, t: f64) -> Result<BasExponent> {
    weighted_b_exponent_with(Exec::default(), u, 0, spec, t)
}

/// `μ_m = max over samples of T⁻¹ log[(1+|ξ(T)|²)^{m/2} |b(T)|]`, measured
/// relative to the value at `t = 0`.
pub fn weighted_b_exponent(u: &TrigVelocityField, m: i32, spec: &BasSampleSpec, t: f64) -> Result<BasExponent> {
    weighted_b_exponent_with(Exec::default(), u, m, spec, t)
}

/// `log (1 + |ξ|²)^{m/2}` from `log |ξ|`, without overflow.
fn log_weight(m: i32, log_xi: f64) -> f64 {
    if m == 0 {
        0.0
    } else if log_xi > 0.0 {
        0.5 * m as f64 * (2.0 * log_xi + (-2.0 * log_xi).exp().ln_1p())
    } else {
        0.5 * m as f64 * (2.0 * log_xi).exp().ln_1p()
    }
}

pub fn weighted_b_exponent_with(
    exec: Exec,
    u: &TrigVelocityField,
    m: i32,
    spec: &BasSampleSpec,
    t: f64,
) -> Result<BasExponent> {
    check_horizon(t)?;
    let samples = bas_samples(u, spec);
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample specification".into()));
    }
    let runs = par::map_slice(exec, &samples, |(x, xi, b)| {
        bas_trajectory_with(u, x, *xi, *b, t, RENORM_DT, StepControl::default())
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut per = Vec::with_capacity(runs.len());
    let mut max_drift: f64 = 0.0;
    for ((x, xi, _), r) in samples.iter().zip(&runs) {
        let last = r.last();
        // Relative to the initial weight 2^{m/2}, so constant data grow at rate 0.
        let lw = log_weight(m, last.log_xi()) - log_weight(m, 0.0);
        per.push((*x, *xi, (lw + last.log_b()) / t));
        max_drift = max_drift.max(r.first_integral_drift);
    }
    let (argmax, value) = per
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.2 > acc.1 { (i, p.2) } else { acc });
    Ok(BasExponent {
        value,
        horizon: t,
        weight_index: m,
        argmax,
        per_sample: per,
        max_drift,
    })
}

// ---------------------------------------------------------------------------
// Higher differentials

#[derive(Clone, Debug, Serialize)]
pub struct HigherNormGrowth {
    pub order: u8,
    /// `T⁻¹ log max_x ‖D^mφ_T(x)‖`; 0 when the differential vanishes
    /// identically on the grid.
    pub value: f64,
    pub argmax: TorusPoint,
    pub vanishes: bool,
    pub horizon: f64,
    /// `(t, t⁻¹ log max_x ‖D^mφ_t(x)‖)`.
    pub trace: Vec<(f64, f64)>,
}

/// Operator norm of `D^mφ_T`: spectral norm for `m = 1`, and
/// `sup_{|v|=1} |D²φ(v, v)|` for `m = 2`.
pub fn higher_norm_growth(u: &TrigVelocityField, m: u8, t: f64, grid: usize) -> Result<HigherNormGrowth> {
    higher_norm_growth_with(Exec::default(), u, m, t, grid, StepControl::default())
}

pub fn higher_norm_growth_with(
    exec: Exec,
    u: &TrigVelocityField,
    m: u8,
    t: f64,
    grid: usize,
    ctrl: StepControl,
) -> Result<HigherNormGrowth> {
    check_horizon(t)?;
    if !(1..=2).contains(&m) {
        return Err(Error::InvalidInput(format!("order {m} not in {{1, 2}}")));
    }
    if grid == 0 {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let pts = grid_points(grid);
    let n = (t / RENORM_DT).ceil() as usize;
    let dt = t / n as f64;
    let series = par::map_slice(exec, &pts, |p| -> Result<Vec<f64>> {
        if m == 1 {
            return log_norm_series(u, p.as_array(), t, ctrl).map(|s| s.1);
        }
        let f = flow::second_rhs(u);
        let mut y0 = [0.0; 14];
        y0[..6].copy_from_slice(&flow::tangent_init(&p.as_array()));
        let ys = flow::lattice(&f, y0, dt, n, ctrl)?;
        Ok(ys
            .iter()
            .map(|y| {
                let mut tens = mat2::ZERO_T;
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            tens[i][j][k] = y[6 + 4 * i + 2 * j + k];
                        }
                    }
                }
                mat2::symmetric_bilinear_norm(&tens).ln()
            })
            .collect())
    });
    let series = series.into_iter().collect::<Result<Vec<_>>>()?;
    let mut trace = Vec::with_capacity(n);
    for k in 1..=n {
        let mx = series.iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max);
        trace.push((dt * k as f64, mx / (dt * k as f64)));
    }
    let (argmax, best) = pts
        .iter()
        .zip(&series)
        .fold((pts[0], f64::NEG_INFINITY), |acc, (p, s)| if s[n] > acc.1 { (*p, s[n]) } else { acc });
    let vanishes = best == f64::NEG_INFINITY;
    for p in trace.iter_mut() {
        if p.1 == f64::NEG_INFINITY {
            p.1 = 0.0;
        }
    }
    Ok(HigherNormGrowth {
        order: m,
        value: if vanishes { 0.0 } else { best / t },
        argmax,
        vanishes,
        horizon: t,
        trace,
    })
}

/// `(Dφ_T, D²φ_T)` at a point, exposed for finite-difference checks.
pub fn second_differential(u: &TrigVelocityField, x: &TorusPoint, t: f64) -> Result<(Mat2, mat2::Tensor2)> {
    let c = flow::second_variation(u, x, t, StepControl::default())?;
    Ok((c.m, c.m2.unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::presets::*;

    #[test]
    fn exponent_examples() {
        assert_eq!(exponent_at(&rigid(), &TorusPoint::new(1.0, 1.0), 10.0).unwrap().value, 0.0);
        let e = exponent_at(&cellular(), &TorusPoint::new(0.0, 0.0), 10.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-6);
        assert_eq!(e.lambda2(), -e.value);
        let s = exponent_at(&shear(), &TorusPoint::new(0.3, 0.4), 50.0).unwrap();
        assert!(s.value.abs() <= 0.05, "{}", s.value);
    }

    #[test]
    fn stagnation_exponent_sets() {
        assert_eq!(stagnation_exponents(&cellular()), vec![-1.0, 0.0, 1.0]);
        assert!(stagnation_exponents(&rigid()).is_empty());
        assert_eq!(stagnation_exponents(&shear()), vec![0.0]);
    }

    #[test]
    fn bas_fixed_point_closed_form() {
        let r = bas_trajectory(&cellular(), &TorusPoint::new(0.0, 0.0), [0.0, 1.0], [1.0, 0.0], 20.0).unwrap();
        let last = r.last();
        assert!((last.log_xi() + 20.0).abs() < 1e-8);
        assert!((last.log_b() - 20.0).abs() < 1e-8);
        assert!(r.first_integral_drift <= 1e-6);
        let q = bas_trajectory(&rigid(), &TorusPoint::new(0.5, 0.1), [1.0, 0.0], [0.0, 1.0], 5.0).unwrap();
        assert_eq!(q.last().xi, [1.0, 0.0]);
        assert_eq!(q.last().b, [0.0, 1.0]);
        assert_eq!(q.first_integral_drift, 0.0);
    }

    #[test]
    fn bas_rejects_bad_initial_data() {
        assert!(bas_trajectory(&rigid(), &TorusPoint::new(0.0, 0.0), [1.0, 0.0], [1.0, 0.0], 1.0).is_err());
        assert!(bas_trajectory(&rigid(), &TorusPoint::new(0.0, 0.0), [2.0, 0.0], [0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn weighted_exponent_m0_is_mu() {
        let spec = BasSampleSpec {
            stagnation: true,
            random: 4,
            seed: 1,
        };
        let a = bas_max_exponent(&cellular(), &spec, 5.0).unwrap();
        let b = weighted_b_exponent(&cellular(), 0, &spec, 5.0).unwrap();
        assert_eq!(a.value, b.value);
        let r = weighted_b_exponent(&rigid(), 2, &spec, 5.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn second_order_rigid_zero() {
        let g = higher_norm_growth(&rigid(), 2, 2.0, 4).unwrap();
        assert!(g.vanishes);
        assert_eq!(g.value, 0.0);
    }
}
