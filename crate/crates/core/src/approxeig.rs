//! Approximate eigenfunctions of `L` supported on thin strips around a
//! streamline, and their residuals `‖(L − z)g‖_{H_m} / ‖g‖_{H_m}`.
//!
//! The reported point is `z = −α` with `α = mλ + iξ`. On a strip chart
//! `H(t,τ) = φ_t(ψ_τ x₀)` we put `F = e^{αt}γ(t)β(τ)` and `f = F∘H⁻¹`; then
//! `(A − α)f = F̃∘H⁻¹` with `F̃ = e^{αt}γ′(t)β(τ)`.
//!
//! Two residual routes are available:
//! * chart: `‖(A + z)g‖` is integrated exactly over the charts (`det DH = 1`),
//!   `‖Kg‖` is computed on the synthesized mode box and the rest is bounded;
//! * spectral: `g` is synthesized on a mode box and the Galerkin matrix of
//!   `L` is applied. Needed when the charts are not injective.

use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{FourierField, Mode, TorusPoint, TrigVelocityField, TWO_PI};
use crate::flow::{self, ChartResolution, StepControl, StripChart};
use crate::jet::{smooth_step, Jet, ORDER};
use crate::mat2::{self, Mat2};
use crate::operators;
use crate::orbits;
use crate::par::{self, Exec};
use crate::quad;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const NORM: f64 = 1.0 / (TWO_PI * TWO_PI);

/// Tail mass allowed for a valid certificate.
pub const TAIL_LIMIT: f64 = 1e-3;
/// Core fraction `c` of the appendix profile: `|β^{(m)}| > 1/2` on `[−sc, sc]`.
pub const APPENDIX_C: f64 = 0.5;

// ---------------------------------------------------------------------------
// Profiles

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaVariant {
    /// `β = s − |τ|`.
    Tent,
    /// `β = 𝟙_{[−s,s]}` (`m = 0` only).
    Indicator,
    /// `β = φ(τ/s) τ^m / m!` with a flat-topped cut-off `φ`.
    Appendix,
}

impl BetaVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tent" => Ok(BetaVariant::Tent),
            "indicator" => Ok(BetaVariant::Indicator),
            "appendix" => Ok(BetaVariant::Appendix),
            _ => Err(Error::InvalidInput(format!("unknown profile variant {s:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BetaVariant::Tent => "tent",
            BetaVariant::Indicator => "indicator",
            BetaVariant::Appendix => "appendix",
        }
    }
}

/// Measured conditions of the appendix profile.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileConditions {
    /// `sup|β^{(k)}| / s^{m−k}` for `k < m`.
    pub scaled_sups: Vec<f64>,
    /// `inf |β^{(m)}|` on `[−sc, sc]`.
    pub core_inf: f64,
    /// `sup |β^{(m)}|`.
    pub sup_m: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BumpProfile {
    pub n: f64,
    pub s: f64,
    pub m: u32,
    pub variant: BetaVariant,
    /// Half-width of the mollifier at the kinks of γ; 0 gives the exact tent.
    pub smoothing_width: f64,
    pub conditions: Option<ProfileConditions>,
}

/// `0.1·min(1, N/10)`.
pub fn default_smoothing(n: f64) -> f64 {
    0.1 * (n / 10.0).min(1.0)
}

const RAMP_TABLE: usize = 4096;

/// `C(y) = S((y+1)/2)` and `C′(y)`, the distribution function of the unit
/// mollifier on `[−1, 1]`.
fn unit_cdf(y: f64) -> (f64, f64) {
    let j = smooth_step(Jet::variable(y).scale(0.5) + Jet::constant(0.5));
    (j.value(), j.derivative(1))
}

/// `R(y) = ∫_{−1}^{y} C` on a uniform grid over `[−1, 1]`.
fn ramp_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 2.0 / RAMP_TABLE as f64;
        let mut r = vec![0.0; RAMP_TABLE + 1];
        let mut prev = unit_cdf(-1.0);
        for i in 0..RAMP_TABLE {
            let next = unit_cdf(-1.0 + h * (i + 1) as f64);
            // Trapezoid with end correction, fourth order.
            r[i + 1] = r[i] + 0.5 * h * (prev.0 + next.0) + h * h / 12.0 * (prev.1 - next.1);
            prev = next;
        }
        r
    })
}

/// Mollified ramp `max(y, 0) ∗ ρ` with unit width, and two derivatives.
fn unit_ramp(y: f64) -> [f64; 3] {
    if y <= -1.0 {
        return [0.0; 3];
    }
    if y >= 1.0 {
        return [y, 1.0, 0.0];
    }
    let table = ramp_table();
    let h = 2.0 / RAMP_TABLE as f64;
    let i = (((y + 1.0) / h) as usize).min(RAMP_TABLE - 1);
    let y0 = -1.0 + h * i as f64;
    let (c0, _) = unit_cdf(y0);
    let (c1, _) = unit_cdf(y0 + h);
    let (c, dc) = unit_cdf(y);
    // Cubic Hermite on the cell with exact end slopes.
    let x = (y - y0) / h;
    let h00 = 2.0 * x * x * x - 3.0 * x * x + 1.0;
    let h10 = x * x * x - 2.0 * x * x + x;
    let h01 = -2.0 * x * x * x + 3.0 * x * x;
    let h11 = x * x * x - x * x;
    let v = h00 * table[i] + h10 * h * c0 + h01 * table[i + 1] + h11 * h * c1;
    [v, c, dc]
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

impl BumpProfile {
    /// `(γ, γ′, γ″)` at `t`.
    pub fn gamma(&self, t: f64) -> [f64; 3] {
        let n = self.n;
        let w = self.smoothing_width;
        if t.abs() >= n {
            return [0.0; 3];
        }
        if w == 0.0 {
            let sign = if t > 0.0 { 1.0 } else if t < 0.0 { -1.0 } else { 0.0 };
            return [1.0 - t.abs() / n, -sign / n, 0.0];
        }
        // The tent with kinks at ±a and 0, a = N − w, written through ramps;
        // mollifying each ramp keeps the support inside [−N, N].
        let a = n - w;
        let r = |x: f64| {
            let v = unit_ramp(x / w);
            [w * v[0], v[1], v[2] / w]
        };
        let (p, c, q) = (r(t + a), r(t), r(t - a));
        let mut g = [0.0; 3];
        for k in 0..3 {
            g[k] = (p[k] - 2.0 * c[k] + q[k]) / a;
        }
        g
    }

    /// `β^{(k)}(τ)` for `k = 0..ORDER`. The tent derivative at its kink is the
    /// one-sided value `−1`.
    pub fn beta(&self, tau: f64) -> [f64; ORDER] {
        let s = self.s;
        let mut out = [0.0; ORDER];
        if tau.abs() > s {
            return out;
        }
        match self.variant {
            BetaVariant::Tent => {
                out[0] = s - tau.abs();
                out[1] = if tau >= 0.0 { -1.0 } else { 1.0 };
            }
            BetaVariant::Indicator => out[0] = 1.0,
            BetaVariant::Appendix => {
                let x = Jet::variable(tau);
                let sign = if tau >= 0.0 { -2.0 / s } else { 2.0 / s };
                let phi = smooth_step(x.scale(sign) + Jet::constant(2.0));
                let poly = x.powi(self.m).scale(1.0 / factorial(self.m));
                let b = phi * poly;
                for (k, o) in out.iter_mut().enumerate() {
                    *o = b.derivative(k);
                }
            }
        }
        out
    }

    fn measure_conditions(&self) -> ProfileConditions {
        let m = self.m as usize;
        let samples = 4001;
        let mut sups = vec![0.0f64; m + 1];
        let mut core_inf = f64::INFINITY;
        for i in 0..samples {
            let tau = -self.s + 2.0 * self.s * i as f64 / (samples - 1) as f64;
            let b = self.beta(tau);
            for k in 0..=m {
                sups[k] = sups[k].max(b[k].abs());
            }
            if tau.abs() <= self.s * APPENDIX_C {
                core_inf = core_inf.min(b[m].abs());
            }
        }
        ProfileConditions {
            scaled_sups: (0..m).map(|k| sups[k] / self.s.powi((m - k) as i32)).collect(),
            core_inf,
            sup_m: sups[m],
        }
    }
}

/// Build `γ` and `β`. `smoothing` defaults to [`default_smoothing`].
pub fn make_profiles(n: f64, s: f64, m: u32, variant: BetaVariant, smoothing: Option<f64>) -> Result<BumpProfile> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidInput(format!("N = {n} must be positive")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidInput(format!("s = {s} must lie in (0, 1)")));
    }
    let w = smoothing.unwrap_or_else(|| default_smoothing(n));
    if !(w >= 0.0 && w < 0.5 * n) {
        return Err(Error::InvalidInput(format!("smoothing width {w} must lie in [0, N/2)")));
    }
    match variant {
        BetaVariant::Appendix if m == 0 || m as usize >= ORDER - 1 => {
            return Err(Error::InvalidInput(format!(
                "appendix profile needs 1 ≤ m ≤ {}",
                ORDER - 2
            )))
        }
        BetaVariant::Indicator if m > 0 => {
            return Err(Error::InvalidInput("indicator profile is only used with m = 0".into()))
        }
        BetaVariant::Tent if m > 1 => {
            return Err(Error::InvalidInput("tent profile is only used with m ≤ 1".into()))
        }
        _ => {}
    }
    let mut p = BumpProfile {
        n,
        s,
        m,
        variant,
        smoothing_width: w,
        conditions: None,
    };
    if variant == BetaVariant::Appendix {
        let c = p.measure_conditions();
        if c.core_inf <= 0.5 {
            return Err(Error::ProfileCondition {
                measured_inf: c.core_inf,
            });
        }
        p.conditions = Some(c);
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Base points

/// `x₀ = y + δv` with `v` the unit eigenvector of `Du(y)` for the eigenvalue
/// `−λ`: the stable direction for `λ > 0`, the unstable one for `λ < 0`.
pub fn choose_base_point(u: &TrigVelocityField, y: &TorusPoint, lambda: f64, delta: f64) -> Result<TorusPoint> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta = {delta} must be positive")));
    }
    let du = u.jacobian(&y.as_array());
    let ev = mat2::eigenvalues(&du);
    let scale = mat2::frobenius(&du).max(1e-300);
    let real = ev.iter().all(|e| e.1.abs() <= 1e-12 * scale);
    let mu = ev[0].0.abs().max(ev[1].0.abs());
    if !real || mu <= 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidInput(format!("point {:?} is not hyperbolic", y.as_array())));
    }
    if (mu - lambda.abs()).abs() > 1e-6 * mu.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "exponent |lambda| = {} does not match the local rate {mu}",
            lambda.abs()
        )));
    }
    let mut v = mat2::eigenvector(&du, -lambda.signum() * mu);
    // Snap directions that are axis-aligned up to rounding, so the base point
    // lies on the invariant line exactly.
    for c in v.iter_mut() {
        if c.abs() < 1e-12 {
            *c = 0.0;
        }
    }
    let nv = mat2::norm(&v);
    v = [v[0] / nv, v[1] / nv];
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    Ok(TorusPoint::new(y.x1 + delta * v[0], y.x2 + delta * v[1]).reduce())
}

/// Point of the orbit of `x` (sampled over one period, or over `horizon`)
/// where `|u|` is largest.
pub fn max_speed_point(u: &TrigVelocityField, x: &TorusPoint, horizon: f64) -> Result<TorusPoint> {
    let p = orbits::prime_period(u, x, horizon, orbits::DEFAULT_RETURN_TOL)?;
    let t = match p.period {
        orbits::Period::Finite(p) => p,
        orbits::Period::Infinite => horizon,
        orbits::Period::Stagnation => return Ok(*x),
    };
    let n = 400;
    let f = flow::position_rhs(u);
    let path = flow::lattice(&f, x.as_array(), t / n as f64, n, StepControl::default())?;
    let best = path
        .iter()
        .max_by(|a, b| mat2::norm(&u.velocity(a)).total_cmp(&mat2::norm(&u.velocity(b))))
        .copied()
        .unwrap_or(x.as_array());
    Ok(TorusPoint::from_array(best).reduce())
}

// ---------------------------------------------------------------------------
// Samples of F on a chart lattice

/// `F = e^{αt}γβ` and `F̃ = e^{αt}γ′β` with their `(∂_t, ∂_τ)` gradients,
/// indexed `j·n_t + i` like [`StripChart`].
#[derive(Clone, Debug)]
pub struct FSamples {
    pub alpha: C64,
    pub n_t: usize,
    pub f: Vec<C64>,
    pub df: Vec<[C64; 2]>,
    pub f_tilde: Vec<C64>,
    pub df_tilde: Vec<[C64; 2]>,
}

pub fn build_f(alpha: C64, profile: &BumpProfile, ts: &[f64], taus: &[f64]) -> FSamples {
    let n_t = ts.len();
    let gam: Vec<[f64; 3]> = ts.iter().map(|&t| profile.gamma(t)).collect();
    let ex: Vec<C64> = ts.iter().map(|&t| (alpha * t).exp()).collect();
    let mut out = FSamples {
        alpha,
        n_t,
        f: Vec::with_capacity(n_t * taus.len()),
        df: Vec::with_capacity(n_t * taus.len()),
        f_tilde: Vec::with_capacity(n_t * taus.len()),
        df_tilde: Vec::with_capacity(n_t * taus.len()),
    };
    for &tau in taus {
        let b = profile.beta(tau);
        for i in 0..n_t {
            let (e, g) = (ex[i], gam[i]);
            out.f.push(e * g[0] * b[0]);
            out.df.push([e * (alpha * g[0] + g[1]) * b[0], e * g[0] * b[1]]);
            out.f_tilde.push(e * g[1] * b[0]);
            out.df_tilde.push([e * (alpha * g[1] + g[2]) * b[0], e * g[1] * b[1]]);
        }
    }
    out
}

fn chart_weights(chart: &StripChart) -> Vec<f64> {
    let wt = quad::trapezoid_weights(chart.n_t(), chart.dt());
    let wtau = quad::trapezoid_weights(chart.n_tau(), chart.dtau());
    let mut w = Vec::with_capacity(wt.len() * wtau.len());
    for b in &wtau {
        for a in &wt {
            w.push(a * b);
        }
    }
    w
}

/// Mode-box synthesis of `F∘H⁻¹` together with its mean.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub field: FourierField,
    pub mean: C64,
}

const SYNTH_BLOCK: usize = 2048;

/// `ĝ_k = (2π)⁻² ∬ F(t,τ) e^{−ik·H(t,τ)} dτ dt` by trapezoid quadrature on the
/// chart lattice, summed directly over the samples.
pub fn synthesize(chart: &StripChart, f: &[C64], m: usize) -> Synthesis {
    synthesize_with(Exec::default(), chart, f, m)
}

pub fn synthesize_with(exec: Exec, chart: &StripChart, f: &[C64], m: usize) -> Synthesis {
    let w = chart_weights(chart);
    let side = 2 * m + 1;
    let active: Vec<usize> = (0..f.len()).filter(|&i| f[i] != ZERO && w[i] != 0.0).collect();
    let blocks: Vec<&[usize]> = active.chunks(SYNTH_BLOCK).collect();
    let partial = par::map_slice(exec, &blocks, |blk| {
        let mut acc = vec![ZERO; side * side];
        for &i in blk.iter() {
            let (e1, e2) = crate::fields::exp_tables(m, &chart.points[i]);
            let c = f[i] * (w[i] * NORM);
            for a in 0..side {
                // e^{−ik₁x₁} = conj(e^{ik₁x₁})
                let ca = c * e1[a].conj();
                let row = &mut acc[a * side..(a + 1) * side];
                for (r, b) in row.iter_mut().zip(&e2) {
                    *r += ca * b.conj();
                }
            }
        }
        acc
    });
    let mut acc = vec![ZERO; side * side];
    for p in partial {
        for (a, b) in acc.iter_mut().zip(p) {
            *a += b;
        }
    }
    let mut field = FourierField::zeros(m);
    let mi = m as i64;
    for k1 in -mi..=mi {
        for k2 in -mi..=mi {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            field.set(&Mode::new(k1, k2), acc[(k1 + mi) as usize * side + (k2 + mi) as usize]);
        }
    }
    Synthesis {
        field,
        mean: acc[m * side + m],
    }
}

// ---------------------------------------------------------------------------
// Strips and symmetrization

/// One strip: chart, samples of `F`, quadrature weights and the factor the
/// strip enters `g` with.
#[derive(Clone, Debug)]
pub struct Strip {
    pub chart: StripChart,
    pub samples: FSamples,
    pub weights: Vec<f64>,
    pub scale: C64,
}

impl Strip {
    /// `(2π)⁻² ∬ |D^m (a F + b F̃)|²` in chart coordinates (`m ∈ {0, 1}`),
    /// including `|scale|²`.
    pub fn integral(&self, m: u32, a: C64, b: C64) -> f64 {
        let s = &self.samples;
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let v = if m == 0 {
                (a * s.f[i] + b * s.f_tilde[i]).norm_sqr()
            } else {
                let gt = a * s.df[i][0] + b * s.df_tilde[i][0];
                let gs = a * s.df[i][1] + b * s.df_tilde[i][1];
                let d: &Mat2 = &self.chart.dh_inv_t[i];
                let x = d[0][0] * gt + d[0][1] * gs;
                let y = d[1][0] * gt + d[1][1] * gs;
                x.norm_sqr() + y.norm_sqr()
            };
            acc += w * v;
        }
        acc * NORM * self.scale.norm_sqr()
    }

    pub fn injective(&self) -> bool {
        self.chart.injectivity_ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Chart,
    Spectral,
    /// Chart when every chart is injective and `m ≤ 1`, spectral otherwise.
    Auto,
}

impl Route {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chart" => Ok(Route::Chart),
            "spectral" => Ok(Route::Spectral),
            "auto" => Ok(Route::Auto),
            _ => Err(Error::InvalidInput(format!("unknown residual route {s:?}"))),
        }
    }
}

/// Parameters of one approximate eigenfunction.
#[derive(Clone, Debug, Serialize)]
pub struct Construction {
    pub x0: TorusPoint,
    pub n: f64,
    pub s: f64,
    pub m: u32,
    pub alpha: C64,
    pub variant: BetaVariant,
    pub smoothing: Option<f64>,
    pub mode_box: usize,
    /// Partner offset `τ₀`; `None` tries `±(2s + s/2)`.
    pub offset: Option<f64>,
    pub chart: ChartResolution,
    /// Require `p(x₀) > 3N` and chart injectivity.
    pub strict_chart: bool,
}

impl Construction {
    pub fn new(x0: TorusPoint, n: f64, s: f64, m: u32, alpha: C64, variant: BetaVariant) -> Self {
        Construction {
            x0,
            n,
            s,
            m,
            alpha,
            variant,
            smoothing: None,
            offset: None,
            mode_box: 48,
            chart: ChartResolution::default(),
            strict_chart: true,
        }
    }
}

/// Mean-zero `g = f − c f̄` built from two disjoint strips on neighbouring
/// streamlines.
#[derive(Clone, Debug)]
pub struct ApproxEigenfunction {
    /// Box synthesis of `g`, scaled so that `‖g‖_{H_m} = 1`.
    pub field: FourierField,
    pub profile: BumpProfile,
    pub x0: TorusPoint,
    pub alpha: C64,
    pub offset: f64,
    pub partner_scale: C64,
    pub strips: Vec<Strip>,
    /// `‖g‖_{H_m}` of the unnormalized function from chart quadrature
    /// (`m ≤ 1`, injective charts).
    pub chart_norm: Option<f64>,
    /// `‖P_M g‖_{H_m}` of the unnormalized box synthesis.
    pub box_norm: f64,
    /// `H_m` mass fraction of the box field beyond two thirds of the box.
    pub tail_mass: f64,
    /// Fraction of `‖g‖²_{H_m}` outside the box (chart norm available only).
    pub outside_box: Option<f64>,
    pub injectivity_ok: bool,
    /// Normalization factor applied to the unnormalized `g`.
    pub normalization: f64,
}

impl ApproxEigenfunction {
    pub fn mode_box(&self) -> usize {
        self.field.mbox.m
    }

    pub fn m(&self) -> u32 {
        self.profile.m
    }

    /// Strip area `4Ns` of one strip (the weak-nullity proxy).
    pub fn strip_area(&self) -> f64 {
        4.0 * self.profile.n * self.profile.s
    }
}

fn strip_at(u: &TrigVelocityField, x0: &TorusPoint, c: &Construction, profile: &BumpProfile) -> Result<Strip> {
    let chart = if c.strict_chart {
        flow::build_chart(u, x0, c.n, c.s, &c.chart)?
    } else {
        flow::sample_chart(u, x0, c.n, c.s, &c.chart)?
    };
    let samples = build_f(c.alpha, profile, &chart.ts, &chart.taus);
    let weights = chart_weights(&chart);
    Ok(Strip {
        chart,
        samples,
        weights,
        scale: C64::new(1.0, 0.0),
    })
}

/// `H_m` mass fraction beyond `⅔` of the box.
pub fn tail_mass(w: &FourierField, m: i32) -> f64 {
    let cut = 2.0 * w.mbox.m as f64 / 3.0;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (k, c) in w.iter() {
        let e = k.weight(m).powi(2) * c.norm_sqr();
        total += e;
        if k.box_radius() as f64 > cut {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Build `f` on the strip at `x₀`, its partner `f̄` on the strip at
/// `ψ_{τ₀}(x₀)`, and return `g = f − c f̄` with `c` matching the means, so the
/// `(0,0)` coefficient of `g` vanishes.
pub fn symmetrize(u: &TrigVelocityField, c: &Construction) -> Result<ApproxEigenfunction> {
    let profile = make_profiles(c.n, c.s, c.m, c.variant, c.smoothing)?;
    let main = strip_at(u, &c.x0, c, &profile)?;
    let offsets = match c.offset {
        Some(o) => vec![o],
        None => vec![2.5 * c.s, -2.5 * c.s],
    };
    let mut last_err = None;
    for tau0 in offsets {
        if tau0.abs() <= 2.0 * c.s {
            return Err(Error::Symmetrization(format!(
                "offset {tau0} does not separate strips of half-width {}",
                c.s
            )));
        }
        let attempt = (|| -> Result<ApproxEigenfunction> {
            let base = flow::transverse_path(u, c.x0.as_array(), &[tau0])?[0];
            let partner = strip_at(u, &TorusPoint::from_array(base).reduce(), c, &profile)?;
            if !flow::strips_disjoint(u, &main.chart, &partner.chart, c.chart.step)? {
                return Err(Error::Symmetrization(format!("strips at offset {tau0} overlap")));
            }
            Ok(assemble(c, &profile, main.clone(), partner, tau0))
        })();
        match attempt {
            Ok(g) => return Ok(g),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Symmetrization("no admissible offset".into())))
}

fn assemble(c: &Construction, profile: &BumpProfile, main: Strip, mut partner: Strip, tau0: f64) -> ApproxEigenfunction {
    let m = c.m;
    let sf = synthesize(&main.chart, &main.samples.f, c.mode_box);
    let sp = synthesize(&partner.chart, &partner.samples.f, c.mode_box);
    let scale_ok = sp.mean.norm() > 1e-14 * sf.mean.norm().max(1e-300) && sp.mean != ZERO;
    let cpart = if scale_ok { sf.mean / sp.mean } else { C64::new(1.0, 0.0) };
    partner.scale = -cpart;
    let raw = sf.field.axpy(-cpart, &sp.field);
    let box_norm = raw.sobolev_norm(m as i32);
    let injective = main.injective() && partner.injective();
    let chart_norm = if m <= 1 && injective {
        let one = C64::new(1.0, 0.0);
        Some((main.integral(m, one, ZERO) + partner.integral(m, one, ZERO)).sqrt())
    } else {
        None
    };
    let normalization = chart_norm.unwrap_or(box_norm);
    let normalization = if normalization > 0.0 { normalization } else { 1.0 };
    let field = raw.scale(C64::new(1.0 / normalization, 0.0));
    let outside_box = chart_norm.map(|n| (1.0 - (box_norm / n).powi(2)).max(0.0));
    ApproxEigenfunction {
        tail_mass: tail_mass(&field, m as i32),
        field,
        profile: profile.clone(),
        x0: c.x0,
        alpha: c.alpha,
        offset: tau0,
        partner_scale: cpart,
        strips: vec![main, partner],
        chart_norm,
        box_norm,
        outside_box,
        injectivity_ok: injective,
        normalization,
    }
}

// ---------------------------------------------------------------------------
// Residuals

/// `Σ_j |ω̂_j| ‖j‖ (1 + ‖j‖)^m`, so that `‖Kh‖_{H_m} ≤ C_K ‖h‖_{H_{m−1}}`.
pub fn k_tail_constant(u: &TrigVelocityField, m: u32) -> f64 {
    u.vorticity_modes()
        .iter()
        .map(|(j, w)| w.norm() * j.norm() * (1.0 + j.norm()).powi(m as i32))
        .sum()
}

/// `Kw` without truncation: the result lives on the box enlarged by the
/// support radius of `curl u`.
pub fn apply_k_full(u: &TrigVelocityField, w: &FourierField) -> FourierField {
    let vort = u.vorticity_modes();
    let r = vort.iter().map(|(j, _)| j.box_radius()).max().unwrap_or(0) as usize;
    let mut out = FourierField::zeros(w.mbox.m + r);
    for (kp, c) in w.iter() {
        if c == ZERO {
            continue;
        }
        for (j, wh) in &vort {
            let k = kp.add(j);
            if k.is_zero() {
                continue;
            }
            let coef = (j.k1 * kp.k2 - j.k2 * kp.k1) as f64 / kp.norm_sq();
            let v = out.get(&k) + wh * coef * c;
            out.set(&k, v);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualDecomposition {
    /// Upper estimate of `‖(L − z)g‖_{H_m}` for unit `g`.
    pub residual: f64,
    /// `‖(−A − z)g‖_{H_m}`.
    pub a_part: f64,
    /// `‖Kg‖_{H_m}` (computed part plus tail bound on the chart route).
    pub kg_norm: f64,
    /// Part of `kg_norm` that is bounded rather than computed.
    pub kg_tail_bound: f64,
    /// Spectral route only: the advective part recomputed from the box
    /// synthesis of `F̃` (`(A − α)f = F̃∘H⁻¹`), relative L₂/H_m mismatch.
    pub a_action_error: Option<f64>,
    pub route: Route,
    /// Box tail mass (spectral) or the share of the residual that is bounded
    /// rather than computed (chart).
    pub tail: f64,
    pub valid: bool,
}

fn resolve_route(g: &ApproxEigenfunction, route: Route) -> Result<Route> {
    match route {
        Route::Auto => Ok(if g.chart_norm.is_some() { Route::Chart } else { Route::Spectral }),
        Route::Chart if g.chart_norm.is_none() => Err(Error::InvalidInput(
            "chart route needs injective charts and m ≤ 1".into(),
        )),
        r => Ok(r),
    }
}

/// Residual decomposition of `g` at `z` on box `m_box` (spectral route) or
/// through the charts. Does not fail on an invalid tail; see [`residual`].
pub fn residual_decomposition(
    u: &TrigVelocityField,
    z: C64,
    g: &ApproxEigenfunction,
    route: Route,
) -> Result<ResidualDecomposition> {
    let m = g.m();
    match resolve_route(g, route)? {
        Route::Chart => {
            // (−A − z)g = −[(A − α)g + (z + α)g] on each strip.
            let shift = z + g.alpha;
            let one = C64::new(1.0, 0.0);
            let a2: f64 = g.strips.iter().map(|s| s.integral(m, shift, one)).sum();
            let a_part = a2.sqrt() / g.normalization;
            let kg_box = apply_k_full(u, &g.field).sobolev_norm(m as i32);
            // ‖(I − P_M)g‖_{H_{m−1}}.
            let tail_lower = if m == 0 {
                let out = g.outside_box.unwrap_or(1.0).sqrt();
                out / (g.mode_box() as f64 + 1.0)
            } else {
                let l2: f64 = g.strips.iter().map(|s| s.integral(0, one, ZERO)).sum::<f64>() / g.normalization.powi(2);
                let boxed = g.field.l2_norm().powi(2);
                (l2 - boxed).max(0.0).sqrt()
            };
            let kg_tail_bound = k_tail_constant(u, m) * tail_lower;
            let kg_norm = kg_box + kg_tail_bound;
            let residual = a_part + kg_norm;
            // Truncation only enters through a bound that is part of the
            // reported value, so the estimate stays an upper estimate.
            Ok(ResidualDecomposition {
                residual,
                a_part,
                kg_norm,
                kg_tail_bound,
                a_action_error: None,
                route: Route::Chart,
                tail: if residual > 0.0 { kg_tail_bound / residual } else { 0.0 },
                valid: residual.is_finite(),
            })
        }
        _ => {
            let mb = g.mode_box();
            let a = operators::assemble_a(u, mb);
            let k = operators::assemble_k(u, mb);
            let ag = a.apply(&g.field.coeffs);
            let kg = k.apply(&g.field.coeffs);
            let w = |i: usize| g.field.mbox.mode(i).weight(m as i32);
            let mut r2 = 0.0;
            let mut a2 = 0.0;
            let mut k2 = 0.0;
            for i in 0..g.field.coeffs.len() {
                let gi = g.field.coeffs[i];
                let ai = -ag[i] - z * gi;
                let wi = w(i).powi(2);
                r2 += wi * (ai + kg[i]).norm_sqr();
                a2 += wi * ai.norm_sqr();
                k2 += wi * kg[i].norm_sqr();
            }
            let bn = g.field.sobolev_norm(m as i32).max(1e-300);
            let a_action_error = a_action_check(g, &ag);
            Ok(ResidualDecomposition {
                residual: r2.sqrt() / bn,
                a_part: a2.sqrt() / bn,
                kg_norm: k2.sqrt() / bn,
                kg_tail_bound: 0.0,
                a_action_error,
                route: Route::Spectral,
                tail: g.tail_mass,
                valid: g.tail_mass <= TAIL_LIMIT,
            })
        }
    }
}

/// Compare the spectral `(A − α)g` with the box synthesis of `F̃` on both
/// strips; relative `H_m` error over the inner two thirds of the box.
fn a_action_check(g: &ApproxEigenfunction, ag: &[C64]) -> Option<f64> {
    let mb = g.mode_box();
    let mut ft = FourierField::zeros(mb);
    for s in &g.strips {
        let syn = synthesize(&s.chart, &s.samples.f_tilde, mb);
        ft = ft.axpy(s.scale / g.normalization, &syn.field);
    }
    let m = g.m() as i32;
    let cut = 2.0 * mb as f64 / 3.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, k) in g.field.mbox.modes().enumerate() {
        if k.box_radius() as f64 > cut {
            continue;
        }
        let spectral = ag[i] - g.alpha * g.field.coeffs[i];
        let w = k.weight(m).powi(2);
        num += w * (spectral - ft.coeffs[i]).norm_sqr();
        den += w * ft.coeffs[i].norm_sqr();
    }
    (den > 0.0).then(|| (num / den).sqrt())
}

/// `‖(L − z)g‖_{H_m}` for a normalized certificate; errors when the tail
/// certificate is invalid.
pub fn residual(u: &TrigVelocityField, z: C64, g: &ApproxEigenfunction, route: Route) -> Result<f64> {
    let d = residual_decomposition(u, z, g, route)?;
    if !d.valid {
        return Err(Error::InvalidCertificate {
            tail: d.tail,
            limit: TAIL_LIMIT,
        });
    }
    Ok(d.residual)
}

/// `sqrt(∫ w |γ′|² / ∫ w |γ|²)` along the base trajectory with
/// `w = |u⊥∘φ_t(x₀)|^{2m} e^{2mλt}`; `w ≡ 1` for `m = 0`.
pub fn predicted_bound(u: &TrigVelocityField, x0: &TorusPoint, lambda: f64, m: u32, profile: &BumpProfile) -> Result<f64> {
    let n = profile.n;
    let half = ChartResolution::default().t_intervals_for(n) / 2;
    let dt = n / half as f64;
    let ts: Vec<f64> = (0..=2 * half).map(|i| -n + dt * i as f64).collect();
    let weights: Vec<f64> = if m == 0 {
        vec![1.0; ts.len()]
    } else {
        let f = flow::position_rhs(u);
        let fwd = flow::lattice(&f, x0.as_array(), dt, half, StepControl::default())?;
        let bwd = flow::lattice(&f, x0.as_array(), -dt, half, StepControl::default())?;
        ts.iter()
            .enumerate()
            .map(|(i, &t)| {
                let p = if i >= half { fwd[i - half] } else { bwd[half - i] };
                let sp = mat2::norm(&u.velocity(&p));
                (sp.powi(2) * (2.0 * lambda * t).exp()).powi(m as i32)
            })
            .collect()
    };
    let num: Vec<f64> = ts.iter().zip(&weights).map(|(&t, w)| w * profile.gamma(t)[1].powi(2)).collect();
    let den: Vec<f64> = ts.iter().zip(&weights).map(|(&t, w)| w * profile.gamma(t)[0].powi(2)).collect();
    Ok((quad::trapezoid(&num, dt) / quad::trapezoid(&den, dt)).sqrt())
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Clone, Debug, Serialize)]
pub enum BaseStrategy {
    /// `choose_base_point` at the hyperbolic stagnation point with rate `|λ|`
    /// nearest the origin.
    Stagnation { delta: f64 },
    /// Witness of `p > 3N` from an orbit scan, moved to the fastest point of
    /// its orbit. When the scan is bounded the origin is used with relaxed
    /// charts (so only the spectral route applies).
    LongOrbit,
    Point(TorusPoint),
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub scenario: String,
    pub m: u32,
    pub lambda: f64,
    pub xis: Vec<f64>,
    pub ns: Vec<f64>,
    /// Half-widths; `None` uses [`default_half_width`].
    pub ss: Vec<Option<f64>>,
    pub variant: BetaVariant,
    pub base: BaseStrategy,
    pub mode_box: usize,
    pub route: Route,
    pub chart: ChartResolution,
    /// Halve `s` up to this many times until the charts are admissible.
    pub max_halvings: u32,
    /// Build charts without the period/injectivity preconditions.
    pub relaxed_chart: bool,
}

/// `1e−2·δ²·e^{−2|λ|N}`: keeps the strip inside the linear zone of the saddle
/// over the whole of `[−N, N]`.
pub fn default_half_width(delta: f64, lambda: f64, n: f64) -> f64 {
    1e-2 * delta * delta * (-2.0 * lambda.abs() * n).exp()
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub scenario: String,
    pub m: u32,
    pub lambda: f64,
    pub xi: f64,
    pub n: f64,
    /// Realized half-width (after halvings).
    pub s: f64,
    pub s_requested: Option<f64>,
    pub residual: f64,
    pub predicted: f64,
    pub kg_norm: f64,
    pub tail: f64,
    pub inj: bool,
    pub a_part: f64,
    pub valid: bool,
    pub route: Option<Route>,
    pub x0: [f64; 2],
    pub halvings: u32,
    pub note: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendVerdict {
    pub xi: f64,
    pub s: Option<f64>,
    pub ns: Vec<f64>,
    pub residuals: Vec<f64>,
    pub decreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    /// Residuals against `N` at fixed `(ξ, s)` over valid rows.
    pub trends: Vec<TrendVerdict>,
    /// `(max − min)/min` of residuals across `ξ` at fixed `(N, s)`.
    pub xi_variation: Vec<(f64, Option<f64>, f64)>,
}

impl ResidualReport {
    /// CSV `scenario,m,lambda,xi,N,s,residual,predicted,kg_norm,tail,inj`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,m,lambda,xi,N,s,residual,predicted,kg_norm,tail,inj\n");
        let f = crate::fmt_float;
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.m,
                f(r.lambda),
                f(r.xi),
                f(r.n),
                f(r.s),
                f(r.residual),
                f(r.predicted),
                f(r.kg_norm),
                f(r.tail),
                r.inj
            );
        }
        out
    }

    pub fn all_decreasing(&self) -> bool {
        !self.trends.is_empty() && self.trends.iter().all(|t| t.decreasing)
    }

    pub fn max_xi_variation(&self) -> f64 {
        self.xi_variation.iter().map(|v| v.2).fold(0.0, f64::max)
    }
}

fn nearest_saddle(u: &TrigVelocityField, lambda: f64) -> Result<TorusPoint> {
    let report = crate::fields::stagnation_points(u);
    let origin = TorusPoint::new(0.0, 0.0);
    report
        .hyperbolic()
        .filter(|p| p.exponent().is_some_and(|e| (e - lambda.abs()).abs() <= 1e-6 * e.max(1.0)))
        .min_by(|a, b| a.location.distance(&origin).total_cmp(&b.location.distance(&origin)))
        .map(|p| p.location)
        .ok_or_else(|| Error::InvalidInput(format!("no hyperbolic stagnation point with rate {}", lambda.abs())))
}

/// Base point, and whether the chart preconditions can be expected to hold.
fn base_point(u: &TrigVelocityField, spec: &SweepSpec, n: f64) -> Result<(TorusPoint, bool)> {
    match &spec.base {
        BaseStrategy::Stagnation { delta } => {
            let y = nearest_saddle(u, spec.lambda)?;
            Ok((choose_base_point(u, &y, spec.lambda, *delta)?, true))
        }
        BaseStrategy::LongOrbit => {
            let target = 3.0 * n * 1.05;
            let horizon = flow::period_horizon(n).max(target);
            let scan = orbits::longest_orbit_scan(u, target, 16, horizon)?;
            match scan.witness {
                Some(w) => Ok((max_speed_point(u, &w.point, horizon)?, true)),
                None => Ok((TorusPoint::new(0.0, 0.0), false)),
            }
        }
        BaseStrategy::Point(p) => Ok((*p, true)),
    }
}

fn run_row(u: &TrigVelocityField, spec: &SweepSpec, n: f64, s: Option<f64>, xi: f64) -> ResidualRow {
    let mut row = ResidualRow {
        scenario: spec.scenario.clone(),
        m: spec.m,
        lambda: spec.lambda,
        xi,
        n,
        s: f64::NAN,
        s_requested: s,
        residual: f64::NAN,
        predicted: f64::NAN,
        kg_norm: f64::NAN,
        tail: f64::NAN,
        inj: false,
        a_part: f64::NAN,
        valid: false,
        route: None,
        x0: [f64::NAN; 2],
        halvings: 0,
        note: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let (x0, admissible) = base_point(u, spec, n)?;
        row.x0 = x0.as_array();
        if !admissible {
            row.note = Some("no orbit with p > 3N found; relaxed charts, spectral route".into());
        }
        let mut s = match (s, &spec.base) {
            (Some(s), _) => s,
            (None, BaseStrategy::Stagnation { delta }) => default_half_width(*delta, spec.lambda, n),
            (None, _) => return Err(Error::InvalidInput("half-width s is required".into())),
        };
        let alpha = C64::new(spec.m as f64 * spec.lambda, xi);
        let mut c = Construction::new(x0, n, s, spec.m, alpha, spec.variant);
        c.mode_box = spec.mode_box;
        c.chart = spec.chart;
        c.strict_chart = !spec.relaxed_chart && admissible;
        let g = loop {
            c.s = s;
            match symmetrize(u, &c) {
                Ok(g) => break g,
                Err(e) if row.halvings < spec.max_halvings && chart_admissibility_error(&e) => {
                    row.halvings += 1;
                    s *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        row.s = s;
        row.inj = g.injectivity_ok;
        let d = residual_decomposition(u, -alpha, &g, spec.route)?;
        row.residual = d.residual;
        row.a_part = d.a_part;
        row.kg_norm = d.kg_norm;
        row.tail = d.tail;
        row.valid = d.valid;
        row.route = Some(d.route);
        row.predicted = predicted_bound(u, &x0, spec.lambda, spec.m, &g.profile)?;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn chart_admissibility_error(e: &Error) -> bool {
    matches!(
        e,
        Error::ChartOverlap { .. } | Error::StagnationProximity { .. } | Error::Symmetrization(_)
    )
}

/// Residual rows for every `(N, s, ξ)`; failed rows are kept with their error.
pub fn sweep(u: &TrigVelocityField, spec: &SweepSpec) -> ResidualReport {
    let mut jobs = Vec::new();
    for &n in &spec.ns {
        for &s in &spec.ss {
            for &xi in &spec.xis {
                jobs.push((n, s, xi));
            }
        }
    }
    let rows: Vec<ResidualRow> = jobs.iter().map(|&(n, s, xi)| run_row(u, spec, n, s, xi)).collect();
    let usable = |r: &ResidualRow| r.error.is_none() && r.valid;
    let mut trends = Vec::new();
    for &s in &spec.ss {
        for &xi in &spec.xis {
            let sel: Vec<&ResidualRow> = rows.iter().filter(|r| r.xi == xi && r.s_requested == s).collect();
            let mut pts: Vec<(f64, f64)> = sel.iter().map(|r| (r.n, if usable(r) { r.residual } else { f64::NAN })).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let residuals: Vec<f64> = pts.iter().map(|p| p.1).collect();
            trends.push(TrendVerdict {
                xi,
                s,
                ns: pts.iter().map(|p| p.0).collect(),
                decreasing: residuals.iter().all(|r| r.is_finite()) && quad::strictly_decreasing(&residuals),
                residuals,
            });
        }
    }
    let mut xi_variation = Vec::new();
    for &n in &spec.ns {
        for &s in &spec.ss {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.s_requested == s)
                .map(|r| if usable(r) { r.residual } else { f64::NAN })
                .collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let var = if vals.iter().all(|v| v.is_finite()) && lo > 0.0 {
                (hi - lo) / lo
            } else {
                f64::NAN
            };
            xi_variation.push((n, s, var));
        }
    }
    ResidualReport {
        rows,
        trends,
        xi_variation,
    }
}

/// Sweep defaults for the stagnation-point construction on the cellular
/// flow: `m = 1`, `λ = 1`, `ξ ∈ {0, 0.7, 2}`, `N ∈ {4, 6, 8}`, `δ = 0.05`.
pub fn saddle_defaults() -> SweepSpec {
    SweepSpec {
        scenario: "saddle".into(),
        m: 1,
        lambda: 1.0,
        xis: vec![0.0, 0.7, 2.0],
        ns: vec![4.0, 6.0, 8.0],
        ss: vec![None],
        variant: BetaVariant::Tent,
        base: BaseStrategy::Stagnation { delta: 0.05 },
        mode_box: 48,
        route: Route::Auto,
        chart: ChartResolution::default(),
        max_halvings: 0,
        relaxed_chart: false,
    }
}

/// Long-trajectory construction in `L₂`: `m = 0`, indicator `β`.
pub fn long_orbit_defaults(xi: f64, ns: Vec<f64>, s: f64) -> SweepSpec {
    SweepSpec {
        scenario: "long-orbit".into(),
        m: 0,
        lambda: 0.0,
        xis: vec![xi],
        ns,
        ss: vec![Some(s)],
        variant: BetaVariant::Indicator,
        base: BaseStrategy::LongOrbit,
        mode_box: 48,
        route: Route::Auto,
        chart: ChartResolution::default(),
        max_halvings: 12,
        relaxed_chart: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::presets::*;

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let v: Vec<f64> = (0..=n).map(|i| f(a + h * i as f64)).collect();
        quad::trapezoid(&v, h)
    }

    #[test]
    fn exact_tent_quotient() {
        let p = make_profiles(5.0, 0.1, 1, BetaVariant::Tent, Some(0.0)).unwrap();
        let num = integrate(|t| p.gamma(t)[1].powi(2), -5.0, 5.0, 20000);
        let den = integrate(|t| p.gamma(t)[0].powi(2), -5.0, 5.0, 20000);
        assert!((num - 2.0 / 5.0).abs() < 1e-3);
        assert!((den - 10.0 / 3.0).abs() < 1e-6);
        assert!((num / den - 3.0 / 25.0).abs() < 1e-3);
    }

    #[test]
    fn smoothed_tent_shape() {
        assert!((unit_ramp(1.0)[0] - 1.0).abs() < 1e-12);
        assert!((unit_ramp(0.0)[0] - unit_ramp(0.0)[0]).abs() == 0.0);
        let p = make_profiles(6.0, 0.1, 1, BetaVariant::Tent, None).unwrap();
        let w = p.smoothing_width;
        assert!((w - 0.06).abs() < 1e-15);
        assert_eq!(p.gamma(6.0)[0], 0.0);
        assert_eq!(p.gamma(-6.01)[0], 0.0);
        // Away from the kinks γ is the tent through ±(N − w).
        let t = 3.0;
        assert!((p.gamma(t)[0] - (1.0 - t / (6.0 - w))).abs() < 1e-12);
        // γ′ against central differences, including inside the kinks.
        for &t in &[-5.95, -0.03, 0.0, 0.02, 5.97] {
            let h = 1e-6;
            let fd = (p.gamma(t + h)[0] - p.gamma(t - h)[0]) / (2.0 * h);
            assert!((fd - p.gamma(t)[1]).abs() < 1e-6, "t = {t}");
            let fd2 = (p.gamma(t + h)[1] - p.gamma(t - h)[1]) / (2.0 * h);
            assert!((fd2 - p.gamma(t)[2]).abs() < 1e-4 * p.gamma(t)[2].abs().max(1.0), "t = {t}");
        }
    }

    #[test]
    fn tent_and_indicator_beta() {
        let p = make_profiles(5.0, 0.2, 1, BetaVariant::Tent, None).unwrap();
        for &tau in &[-0.15, 0.05, 0.19] {
            assert_eq!(p.beta(tau)[1].abs(), 1.0);
        }
        assert_eq!(p.beta(0.3)[0], 0.0);
        let q = make_profiles(5.0, 0.2, 0, BetaVariant::Indicator, None).unwrap();
        assert_eq!(q.beta(0.2)[0], 1.0);
        assert_eq!(q.beta(0.21)[0], 0.0);
        assert!(make_profiles(5.0, 0.2, 1, BetaVariant::Indicator, None).is_err());
        assert!(make_profiles(5.0, 0.2, 0, BetaVariant::Appendix, None).is_err());
        assert!(make_profiles(-1.0, 0.2, 0, BetaVariant::Tent, None).is_err());
    }

    #[test]
    fn appendix_conditions_scale() {
        let mut sup0 = Vec::new();
        let mut sup1 = Vec::new();
        for &s in &[0.1, 0.05, 0.025] {
            let p = make_profiles(5.0, s, 2, BetaVariant::Appendix, None).unwrap();
            let c = p.conditions.clone().unwrap();
            assert!(c.core_inf > 0.5);
            sup0.push(c.scaled_sups[0]);
            sup1.push(c.scaled_sups[1]);
            // β″ against differences of β′.
            let tau = 0.7 * s;
            let h = 1e-7 * s;
            let fd = (p.beta(tau + h)[1] - p.beta(tau - h)[1]) / (2.0 * h);
            assert!((fd - p.beta(tau)[2]).abs() < 1e-5 * p.beta(tau)[2].abs().max(1.0));
        }
        for v in [sup0, sup1] {
            assert!(v.iter().all(|x| (x / v[0] - 1.0).abs() < 1e-9), "{v:?}");
        }
    }

    #[test]
    fn base_point_examples() {
        let y = TorusPoint::new(0.0, 0.0);
        let a = choose_base_point(&cellular(), &y, 1.0, 0.1).unwrap();
        assert_eq!(a.as_array(), [0.1, 0.0]);
        let b = choose_base_point(&cellular(), &y, -1.0, 0.1).unwrap();
        assert_eq!(b.as_array(), [0.0, 0.1]);
        assert!(choose_base_point(&cellular(), &TorusPoint::new(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2), 1.0, 0.1).is_err());
        assert!(choose_base_point(&cellular(), &y, 2.0, 0.1).is_err());
    }

    #[test]
    fn base_point_delta_diagnostic() {
        // |u(φ_t x₀)| / |u(x₀)| against e^{−t}: the error shrinks with δ.
        let u = cellular();
        let y = TorusPoint::new(0.0, 0.0);
        let err = |d: f64| {
            let x0 = choose_base_point(&u, &y, 1.0, d).unwrap();
            let x1 = flow::flow_lifted(&u, x0.as_array(), 2.0, StepControl::default()).unwrap();
            let r = mat2::norm(&u.velocity(&x1)) / mat2::norm(&u.velocity(&x0.as_array()));
            (r - (-2.0f64).exp()).abs()
        };
        let e = [err(0.2), err(0.1), err(0.05)];
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    }

    #[test]
    fn f_samples_identities() {
        let p = make_profiles(4.0, 0.1, 1, BetaVariant::Tent, None).unwrap();
        let ts: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
        let taus = [-0.05, 0.0, 0.07];
        let a = build_f(C64::new(0.0, 0.0), &p, &ts, &taus);
        for j in 0..taus.len() {
            for i in 0..ts.len() {
                let v = a.f[j * ts.len() + i];
                assert_eq!(v.im, 0.0);
                let mirror = a.f[j * ts.len() + ts.len() - 1 - i];
                assert!((v.re - mirror.re).abs() < 1e-12);
            }
        }
        let b = build_f(C64::new(0.0, 1.0), &p, &ts, &taus);
        let c = build_f(C64::new(0.0, 3.0), &p, &ts, &taus);
        for (x, y) in b.f.iter().zip(&c.f) {
            assert!((x.norm() - y.norm()).abs() < 1e-14);
        }
        let d = build_f(C64::new(1.0, 0.7), &p, &ts, &taus);
        for i in 0..ts.len() {
            let g = p.gamma(ts[i]);
            if g[0].abs() > 1e-8 {
                let ratio = d.f_tilde[i] / d.f[i];
                assert!((ratio - C64::new(g[1] / g[0], 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rigid_synthesis_matches_direct_integral() {
        // H(t,τ) = x₀ + (t, τ); F = e^{iτ}·ρ(t,τ) with a smooth ρ.
        let u = rigid();
        let x0 = TorusPoint::new(1.0, 2.0);
        let res = ChartResolution {
            tau_samples: 81,
            t_intervals: Some(400),
            step: StepControl::default(),
        };
        let chart = flow::sample_chart(&u, &x0, 1.5, 0.5, &res).unwrap();
        let rho = |t: f64, tau: f64| ((1.0 - (t / 1.5).powi(2)) * (1.0 - (tau / 0.5).powi(2))).powi(3);
        let f: Vec<C64> = (0..chart.points.len())
            .map(|k| {
                let (t, tau) = (chart.ts[k % chart.n_t()], chart.taus[k / chart.n_t()]);
                C64::from_polar(rho(t, tau), tau)
            })
            .collect();
        let syn = synthesize(&chart, &f, 4);
        for k in [Mode::new(1, 0), Mode::new(-2, 3), Mode::new(4, -4)] {
            // Direct 2D integral by fine midpoint rule.
            let n = 600;
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let t = -1.5 + 3.0 * (a as f64 + 0.5) / n as f64;
                    let tau = -0.5 + (b as f64 + 0.5) / n as f64;
                    let x = [1.0 + t, 2.0 + tau];
                    acc += C64::from_polar(rho(t, tau), tau - k.k1 as f64 * x[0] - k.k2 as f64 * x[1]);
                }
            }
            acc *= 3.0 / n as f64 * (1.0 / n as f64) * NORM;
            assert!((syn.field.get(&k) - acc).norm() < 1e-8, "{k:?}");
        }
        let zero = synthesize(&chart, &vec![ZERO; f.len()], 4);
        assert_eq!(zero.field.l2_norm(), 0.0);
    }

    #[test]
    fn rigid_single_mode_residuals() {
        // e^{ix₁} is an exact eigenfunction with eigenvalue −i.
        let u = rigid();
        let w = FourierField::single(3, Mode::new(1, 0), C64::new(1.0, 0.0)).unwrap();
        let l = operators::assemble_l(&u, 3);
        let r = |z: C64| {
            let v = l.apply(&w.coeffs);
            v.iter().zip(&w.coeffs).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt()
        };
        assert!(r(C64::new(0.0, -1.0)) < 1e-15);
        assert!((r(C64::new(0.5, -1.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predicted_bound_examples() {
        let p = make_profiles(5.0, 0.02, 0, BetaVariant::Indicator, Some(0.0)).unwrap();
        let b = predicted_bound(&rigid(), &TorusPoint::new(0.0, 0.0), 0.0, 0, &p).unwrap();
        assert!((b - 3f64.sqrt() / 5.0).abs() < 2e-3);
        let q = make_profiles(5.0, 0.02, 1, BetaVariant::Tent, Some(0.0)).unwrap();
        let c = predicted_bound(&shear(), &TorusPoint::new(0.0, 0.3), 0.0, 1, &q).unwrap();
        assert!((c - 3f64.sqrt() / 5.0).abs() < 2e-3);
        // Cellular, base point approaching the saddle: the weight flattens.
        let r = make_profiles(4.0, 0.01, 1, BetaVariant::Tent, None).unwrap();
        let plain = predicted_bound(&rigid(), &TorusPoint::new(0.0, 0.0), 0.0, 0, &r).unwrap();
        let near = predicted_bound(&cellular(), &TorusPoint::new(1e-3, 0.0), 1.0, 1, &r).unwrap();
        let far = predicted_bound(&cellular(), &TorusPoint::new(0.3, 0.0), 1.0, 1, &r).unwrap();
        assert!((near - plain).abs() < (far - plain).abs());
        assert!((near - plain).abs() / plain < 0.05, "{near} vs {plain}");
    }

    fn shear_construction(m: u32, variant: BetaVariant, s: f64) -> Construction {
        let mut c = Construction::new(TorusPoint::new(0.0, 0.5), 3.0, s, m, C64::new(0.0, 0.37), variant);
        c.chart.t_intervals = Some(600);
        c
    }

    #[test]
    fn symmetrized_field_is_mean_zero_and_split() {
        let u = shear();
        let g = symmetrize(&u, &shear_construction(0, BetaVariant::Tent, 0.05)).unwrap();
        assert!(g.injectivity_ok);
        assert!(g.field.get(&Mode::new(0, 0)) == ZERO);
        // Disjoint supports: ‖f − c f̄‖² = ‖f‖² + |c|²‖f̄‖².
        let one = C64::new(1.0, 0.0);
        let parts: f64 = g.strips.iter().map(|s| s.integral(0, one, ZERO)).sum();
        let syn: Vec<FourierField> = g.strips.iter().map(|s| synthesize(&s.chart, &s.samples.f, 48).field).collect();
        let sum = syn[0].l2_norm().powi(2) + g.partner_scale.norm_sqr() * syn[1].l2_norm().powi(2);
        let diff = g.box_norm.powi(2);
        assert!((diff / sum - 1.0).abs() < 0.01, "{diff} vs {sum}");
        assert!((g.chart_norm.unwrap().powi(2) / parts - 1.0).abs() < 1e-12);
        assert!((g.field.sobolev_norm(0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn chart_and_spectral_routes_agree_on_resolved_strip() {
        // Short, wide strip with smooth profiles so the box resolves g.
        let u = shear();
        let mut c = Construction::new(TorusPoint::new(0.0, 1.0), 2.0, 0.2, 1, C64::new(0.0, 0.37), BetaVariant::Appendix);
        c.smoothing = Some(0.5);
        c.chart.t_intervals = Some(400);
        let g = symmetrize(&u, &c).unwrap();
        let z = -c.alpha;
        let chart = residual_decomposition(&u, z, &g, Route::Chart).unwrap();
        let spec = residual_decomposition(&u, z, &g, Route::Spectral).unwrap();
        assert!(g.outside_box.unwrap() < 0.25);
        assert!((chart.a_part / spec.a_part - 1.0).abs() < 0.05, "{chart:?} {spec:?}");
        assert!(spec.a_action_error.unwrap() < 0.05);
        assert!(spec.residual <= spec.a_part + spec.kg_norm + 1e-12);
    }

    #[test]
    fn k_parts_shrink_with_s() {
        let u = cellular();
        let x0 = choose_base_point(&u, &TorusPoint::new(0.0, 0.0), 1.0, 0.05).unwrap();
        let mut last = f64::INFINITY;
        for s in [4e-6, 2e-6, 1e-6] {
            let mut c = Construction::new(x0, 4.0, s, 1, C64::new(1.0, 0.7), BetaVariant::Tent);
            c.mode_box = 24;
            let g = symmetrize(&u, &c).unwrap();
            let d = residual_decomposition(&u, -c.alpha, &g, Route::Chart).unwrap();
            assert!(d.kg_norm < last, "{s}: {}", d.kg_norm);
            last = d.kg_norm;
        }
    }

    #[test]
    fn overlapping_offset_is_rejected() {
        let u = shear();
        let mut c = shear_construction(0, BetaVariant::Tent, 0.05);
        c.offset = Some(0.06);
        assert!(matches!(symmetrize(&u, &c), Err(Error::Symmetrization(_))));
    }

    #[test]
    fn k_tail_constant_bounds_k() {
        let u = cellular();
        let w = operators::gaussian_seed([0.5, 0.3], 0.3, 10);
        for m in [0u32, 1] {
            let lhs = apply_k_full(&u, &w).sobolev_norm(m as i32);
            let rhs = k_tail_constant(&u, m) * w.sobolev_norm(m as i32 - 1);
            assert!(lhs <= rhs, "m = {m}");
        }
        let trunc = operators::assemble_k(&u, 10).apply_field(&w).unwrap();
        let full = apply_k_full(&u, &w);
        for (k, v) in trunc.iter() {
            assert!((full.get(&k) - v).norm() < 1e-15);
        }
    }
}
