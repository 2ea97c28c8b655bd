//! Spectral representation of steady states and scalar fields on the torus.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat2::{self, Mat2, Tensor2, Vec2};

pub const TWO_PI: f64 = 2.0 * PI;

/// Reduce to `[0, 2π)`.
pub fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Reduce to `(-π, π]`.
pub fn wrap_signed(a: f64) -> f64 {
    let r = wrap(a);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusPoint {
    pub x1: f64,
    pub x2: f64,
}

impl TorusPoint {
    /// Point reduced to the fundamental domain.
    pub fn new(x1: f64, x2: f64) -> Self {
        TorusPoint {
            x1: wrap(x1),
            x2: wrap(x2),
        }
    }

    pub fn from_array(x: Vec2) -> Self {
        Self::new(x[0], x[1])
    }

    pub fn as_array(&self) -> Vec2 {
        [self.x1, self.x2]
    }

    pub fn reduce(self) -> Self {
        Self::new(self.x1, self.x2)
    }

    /// Flat-torus distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_distance(&self.as_array(), &other.as_array())
    }
}

/// Flat-torus distance between two (possibly unreduced) coordinates.
pub fn torus_distance(a: &Vec2, b: &Vec2) -> f64 {
    wrap_signed(a[0] - b[0]).hypot(wrap_signed(a[1] - b[1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Mode {
    pub k1: i64,
    pub k2: i64,
}

impl Mode {
    pub const fn new(k1: i64, k2: i64) -> Self {
        Mode { k1, k2 }
    }

    pub fn norm_sq(&self) -> f64 {
        (self.k1 * self.k1 + self.k2 * self.k2) as f64
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    pub fn neg(&self) -> Mode {
        Mode::new(-self.k1, -self.k2)
    }

    pub fn add(&self, o: &Mode) -> Mode {
        Mode::new(self.k1 + o.k1, self.k2 + o.k2)
    }

    pub fn sub(&self, o: &Mode) -> Mode {
        Mode::new(self.k1 - o.k1, self.k2 - o.k2)
    }

    /// `max(|k1|, |k2|)`.
    pub fn box_radius(&self) -> i64 {
        self.k1.abs().max(self.k2.abs())
    }

    /// Sobolev weight `‖k‖^m`.
    pub fn weight(&self, m: i32) -> f64 {
        self.norm_sq().powf(0.5 * m as f64)
    }
}

/// Modes `{k : |k1|, |k2| ≤ M, k ≠ 0}` in a fixed order (k1 major, then k2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModeBox {
    pub m: usize,
}

impl ModeBox {
    pub fn new(m: usize) -> Self {
        ModeBox { m }
    }

    pub fn len(&self) -> usize {
        let s = 2 * self.m + 1;
        s * s - 1
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn contains(&self, k: &Mode) -> bool {
        !k.is_zero() && k.box_radius() <= self.m as i64
    }

    pub fn index(&self, k: &Mode) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let m = self.m as i64;
        let s = 2 * m + 1;
        let raw = (k.k1 + m) * s + (k.k2 + m);
        let centre = m * s + m;
        Some(if raw > centre { raw - 1 } else { raw } as usize)
    }

    pub fn mode(&self, idx: usize) -> Mode {
        let m = self.m as i64;
        let s = 2 * m + 1;
        let centre = m * s + m;
        let raw = idx as i64;
        let raw = if raw >= centre { raw + 1 } else { raw };
        Mode::new(raw / s - m, raw % s - m)
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }
}

/// Mean-zero scalar field stored densely on a mode box.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    pub mbox: ModeBox,
    pub coeffs: Vec<C64>,
}

impl FourierField {
    pub fn zeros(m: usize) -> Self {
        let mbox = ModeBox::new(m);
        FourierField {
            mbox,
            coeffs: vec![C64::new(0.0, 0.0); mbox.len()],
        }
    }

    /// Build from sparse coefficients. The origin is rejected; modes outside
    /// the box are rejected.
    pub fn from_modes<I: IntoIterator<Item = (Mode, C64)>>(m: usize, modes: I) -> Result<Self> {
        let mut f = FourierField::zeros(m);
        for (k, c) in modes {
            if k.is_zero() {
                return Err(Error::InvalidInput(
                    "mean-zero field cannot carry a (0,0) coefficient".into(),
                ));
            }
            let i = f.mbox.index(&k).ok_or_else(|| {
                Error::InvalidInput(format!("mode ({}, {}) outside box {}", k.k1, k.k2, m))
            })?;
            f.coeffs[i] += c;
        }
        Ok(f)
    }

    pub fn single(m: usize, k: Mode, c: C64) -> Result<Self> {
        Self::from_modes(m, [(k, c)])
    }

    pub fn box_size(&self) -> usize {
        self.mbox.m
    }

    pub fn get(&self, k: &Mode) -> C64 {
        self.mbox
            .index(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn set(&mut self, k: &Mode, c: C64) {
        if let Some(i) = self.mbox.index(k) {
            self.coeffs[i] = c;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, C64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (self.mbox.mode(i), *c))
    }

    /// Nonzero entries only.
    pub fn nonzero(&self) -> Vec<(Mode, C64)> {
        self.iter().filter(|(_, c)| c.norm_sqr() > 0.0).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `(Σ ‖k‖^{2m} |w_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, m: i32) -> f64 {
        self.iter()
            .map(|(k, c)| k.weight(2 * m) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Fraction of the `H_m` norm² carried by modes with `max|k_i| > frac·M`.
    pub fn tail_fraction(&self, m: i32, frac: f64) -> f64 {
        let cut = frac * self.mbox.m as f64;
        let mut tail = 0.0;
        let mut total = 0.0;
        for (k, c) in self.iter() {
            let e = k.weight(2 * m) * c.norm_sqr();
            total += e;
            if k.box_radius() as f64 > cut {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.iter()
            .all(|(k, c)| (c - self.get(&k.neg()).conj()).norm() <= tol * scale.max(1e-300))
    }

    pub fn scale(&self, a: C64) -> FourierField {
        FourierField {
            mbox: self.mbox,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `self + a·other` on the larger of the two boxes.
    pub fn axpy(&self, a: C64, other: &FourierField) -> FourierField {
        let m = self.mbox.m.max(other.mbox.m);
        let mut out = self.resized(m);
        for (k, c) in other.iter() {
            let i = out.mbox.index(&k).unwrap();
            out.coeffs[i] += a * c;
        }
        out
    }

    /// Copy onto another box (truncating or zero-padding).
    pub fn resized(&self, m: usize) -> FourierField {
        let mut out = FourierField::zeros(m);
        for (k, c) in self.iter() {
            if let Some(i) = out.mbox.index(&k) {
                out.coeffs[i] = c;
            }
        }
        out
    }

    /// Real part projection `(w + conj(w(-x)))/2`, i.e. the real field with
    /// the same real-space real part.
    pub fn real_part(&self) -> FourierField {
        let mut out = FourierField::zeros(self.mbox.m);
        for (i, (k, c)) in self.iter().enumerate() {
            out.coeffs[i] = 0.5 * (c + self.get(&k.neg()).conj());
        }
        out
    }

    /// Point evaluation by separable exponentials.
    pub fn eval(&self, x: &Vec2) -> C64 {
        let (e1, e2) = exp_tables(self.mbox.m, x);
        let m = self.mbox.m as i64;
        let mut s = C64::new(0.0, 0.0);
        for (k, c) in self.iter() {
            s += c * e1[(k.k1 + m) as usize] * e2[(k.k2 + m) as usize];
        }
        s
    }

    /// Value and gradient at a point.
    pub fn eval_grad(&self, x: &Vec2) -> (C64, [C64; 2]) {
        let (e1, e2) = exp_tables(self.mbox.m, x);
        let m = self.mbox.m as i64;
        let mut v = C64::new(0.0, 0.0);
        let mut g = [C64::new(0.0, 0.0); 2];
        for (k, c) in self.iter() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let t = c * e1[(k.k1 + m) as usize] * e2[(k.k2 + m) as usize];
            v += t;
            g[0] += C64::new(0.0, k.k1 as f64) * t;
            g[1] += C64::new(0.0, k.k2 as f64) * t;
        }
        (v, g)
    }
}

/// `e^{i k x_j}` for `k = -m..=m`, built by repeated multiplication.
pub(crate) fn exp_tables(m: usize, x: &Vec2) -> (Vec<C64>, Vec<C64>) {
    let table = |xj: f64| {
        let n = 2 * m + 1;
        let mut t = vec![C64::new(0.0, 0.0); n];
        let step = C64::from_polar(1.0, xj);
        t[m] = C64::new(1.0, 0.0);
        for i in 1..=m {
            // Reset from sin/cos periodically to bound the recurrence error.
            let v = if i % 32 == 0 {
                C64::from_polar(1.0, i as f64 * xj)
            } else {
                t[m + i - 1] * step
            };
            t[m + i] = v;
            t[m - i] = v.conj();
        }
        t
    };
    (table(x[0]), table(x[1]))
}

/// Fast point evaluator for a [`FourierField`]: the coefficient matrix
/// `c[k1][k2]` is factored by SVD and truncated to its numerical rank, so that
/// `w(x) = Σ_r (Σ_{k1} a_r(k1) e^{ik1x1}) (Σ_{k2} b_r(k2) e^{ik2x2})` costs
/// `O(rank · M)` per point.
#[derive(Clone, Debug)]
pub struct SeparableField {
    m: usize,
    /// `a[r]` over `k1 = -m..=m`, singular value folded in.
    a: Vec<Vec<C64>>,
    b: Vec<Vec<C64>>,
}

impl SeparableField {
    pub fn new(w: &FourierField) -> Self {
        let m = w.mbox.m;
        let s = 2 * m + 1;
        let mi = m as i64;
        let mat = nalgebra::DMatrix::<C64>::from_fn(s, s, |i, j| {
            w.get(&Mode::new(i as i64 - mi, j as i64 - mi))
        });
        let svd = mat.svd(true, true);
        let u = svd.u.expect("left vectors requested");
        let vt = svd.v_t.expect("right vectors requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (r, sv) in svd.singular_values.iter().enumerate() {
            if *sv <= 1e-15 * smax || *sv == 0.0 {
                continue;
            }
            a.push((0..s).map(|i| u[(i, r)] * *sv).collect());
            b.push((0..s).map(|j| vt[(r, j)]).collect());
        }
        SeparableField { m, a, b }
    }

    pub fn rank(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, x: &Vec2) -> C64 {
        let (e1, e2) = exp_tables(self.m, x);
        let mut out = C64::new(0.0, 0.0);
        for (a, b) in self.a.iter().zip(&self.b) {
            let p: C64 = a.iter().zip(&e1).map(|(c, e)| c * e).sum();
            let q: C64 = b.iter().zip(&e2).map(|(c, e)| c * e).sum();
            out += p * q;
        }
        out
    }

    /// Value and gradient.
    pub fn eval_grad(&self, x: &Vec2) -> (C64, [C64; 2]) {
        let (e1, e2) = exp_tables(self.m, x);
        let mi = self.m as i64;
        let mut v = C64::new(0.0, 0.0);
        let mut g = [C64::new(0.0, 0.0); 2];
        for (a, b) in self.a.iter().zip(&self.b) {
            let mut p = C64::new(0.0, 0.0);
            let mut dp = C64::new(0.0, 0.0);
            for (i, (c, e)) in a.iter().zip(&e1).enumerate() {
                let t = c * e;
                p += t;
                dp += t * C64::new(0.0, (i as i64 - mi) as f64);
            }
            let mut q = C64::new(0.0, 0.0);
            let mut dq = C64::new(0.0, 0.0);
            for (j, (c, e)) in b.iter().zip(&e2).enumerate() {
                let t = c * e;
                q += t;
                dq += t * C64::new(0.0, (j as i64 - mi) as f64);
            }
            v += p * q;
            g[0] += dp * q;
            g[1] += p * dq;
        }
        (v, g)
    }
}

/// Mean-zero vector field (velocity-like) on a mode box.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierVector {
    pub mbox: ModeBox,
    pub c1: Vec<C64>,
    pub c2: Vec<C64>,
}

impl FourierVector {
    pub fn zeros(m: usize) -> Self {
        let mbox = ModeBox::new(m);
        FourierVector {
            mbox,
            c1: vec![C64::new(0.0, 0.0); mbox.len()],
            c2: vec![C64::new(0.0, 0.0); mbox.len()],
        }
    }

    pub fn get(&self, k: &Mode) -> [C64; 2] {
        match self.mbox.index(k) {
            Some(i) => [self.c1[i], self.c2[i]],
            None => [C64::new(0.0, 0.0); 2],
        }
    }

    pub fn set(&mut self, k: &Mode, v: [C64; 2]) {
        if let Some(i) = self.mbox.index(k) {
            self.c1[i] = v[0];
            self.c2[i] = v[1];
        }
    }

    /// Maximum modulus of the divergence symbol `i k·v̂_k`.
    pub fn max_divergence(&self) -> f64 {
        self.mbox
            .modes()
            .enumerate()
            .map(|(i, k)| (self.c1[i] * k.k1 as f64 + self.c2[i] * k.k2 as f64).norm())
            .fold(0.0, f64::max)
    }
}

/// Scalar curl `ŵ_k = -i k2 v̂1 + i k1 v̂2`.
pub fn curl(v: &FourierVector) -> FourierField {
    let mut w = FourierField::zeros(v.mbox.m);
    for (i, k) in v.mbox.modes().enumerate() {
        w.coeffs[i] =
            C64::new(0.0, -(k.k2 as f64)) * v.c1[i] + C64::new(0.0, k.k1 as f64) * v.c2[i];
    }
    w
}

/// Symbol of `curl⁻¹` on mean-zero fields: `v̂_k = i (k2, -k1) ŵ_k / ‖k‖²`.
pub fn curl_inverse_symbol(k: &Mode) -> [C64; 2] {
    let n2 = k.norm_sq();
    [
        C64::new(0.0, k.k2 as f64 / n2),
        C64::new(0.0, -(k.k1 as f64) / n2),
    ]
}

/// The divergence-free field whose curl is `w`.
pub fn curl_inverse(w: &FourierField) -> FourierVector {
    let mut v = FourierVector::zeros(w.mbox.m);
    for (i, k) in w.mbox.modes().enumerate() {
        let s = curl_inverse_symbol(&k);
        v.c1[i] = s[0] * w.coeffs[i];
        v.c2[i] = s[1] * w.coeffs[i];
    }
    v
}

/// `curl⁻¹` for sparse input, rejecting a mean component.
pub fn curl_inverse_modes(w: &[(Mode, C64)]) -> Result<Vec<(Mode, [C64; 2])>> {
    w.iter()
        .map(|(k, c)| {
            if k.is_zero() {
                Err(Error::InvalidInput("curl_inverse of a (0,0) coefficient".into()))
            } else {
                let s = curl_inverse_symbol(k);
                Ok((*k, [s[0] * c, s[1] * c]))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct HalfTerm {
    k: [f64; 2],
    a: f64,
    b: f64,
}

/// Point evaluation of a velocity field and its derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Evaluation {
    Value(Vec2),
    Jacobian(Mat2),
    Hessian(Tensor2),
}

/// Divergence-free velocity `u = U + ∇⊥ψ` with a constant mean `U` and a
/// real trigonometric-polynomial stream function `ψ`.
///
/// `u = (U1 - ∂₂ψ, U2 + ∂₁ψ)`, so `curl u = Δψ`.
#[derive(Clone, Debug)]
pub struct TrigVelocityField {
    mean: Vec2,
    stream: Vec<(Mode, C64)>,
    half: Vec<HalfTerm>,
    max_speed: f64,
}

impl TrigVelocityField {
    /// Build from a mean velocity and stream-function modes. The modes must
    /// form a conjugate-symmetric set (real `ψ`) without the origin.
    pub fn new(mean: Vec2, stream: Vec<(Mode, C64)>) -> Result<Self> {
        let mut map: BTreeMap<Mode, C64> = BTreeMap::new();
        for (k, c) in stream {
            if k.is_zero() {
                continue;
            }
            *map.entry(k).or_insert(C64::new(0.0, 0.0)) += c;
        }
        map.retain(|_, c| c.norm() > 0.0);
        let scale = map.values().map(|c| c.norm()).fold(0.0, f64::max);
        for (k, c) in &map {
            let partner = map.get(&k.neg()).copied().unwrap_or(C64::new(0.0, 0.0));
            if (c - partner.conj()).norm() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "stream function not real: coefficient at ({}, {}) lacks its conjugate partner",
                    k.k1, k.k2
                )));
            }
        }
        if !(mean[0].is_finite() && mean[1].is_finite()) {
            return Err(Error::InvalidInput("non-finite mean velocity".into()));
        }
        let half = map
            .iter()
            .filter(|(k, _)| k.k1 > 0 || (k.k1 == 0 && k.k2 > 0))
            .map(|(k, c)| HalfTerm {
                k: [k.k1 as f64, k.k2 as f64],
                a: c.re,
                b: c.im,
            })
            .collect();
        let mut u = TrigVelocityField {
            mean,
            stream: map.into_iter().collect(),
            half,
            max_speed: 0.0,
        };
        u.max_speed = u.sampled_max_speed(64);
        Ok(u)
    }

    pub fn mean(&self) -> Vec2 {
        self.mean
    }

    /// Stream-function modes, sorted.
    pub fn stream_modes(&self) -> &[(Mode, C64)] {
        &self.stream
    }

    pub fn is_zero(&self) -> bool {
        self.stream.is_empty() && self.mean == [0.0, 0.0]
    }

    /// Largest `max(|k1|, |k2|)` in the stream support.
    pub fn support_radius(&self) -> i64 {
        self.stream.iter().map(|(k, _)| k.box_radius()).max().unwrap_or(0)
    }

    /// Velocity Fourier coefficients `û_j`, including `j = 0` for the mean.
    pub fn velocity_modes(&self) -> Vec<(Mode, [C64; 2])> {
        let mut out = Vec::new();
        if self.mean != [0.0, 0.0] {
            out.push((
                Mode::new(0, 0),
                [C64::new(self.mean[0], 0.0), C64::new(self.mean[1], 0.0)],
            ));
        }
        for (k, c) in &self.stream {
            out.push((
                *k,
                [
                    C64::new(0.0, -(k.k2 as f64)) * c,
                    C64::new(0.0, k.k1 as f64) * c,
                ],
            ));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Vorticity modes `ω̂_k = -‖k‖² ψ̂_k`.
    pub fn vorticity_modes(&self) -> Vec<(Mode, C64)> {
        self.stream
            .iter()
            .map(|(k, c)| (*k, -k.norm_sq() * c))
            .collect()
    }

    /// Vorticity as a field on box `m` (modes outside the box are dropped).
    pub fn vorticity_field(&self, m: usize) -> FourierField {
        let mut w = FourierField::zeros(m);
        for (k, c) in self.vorticity_modes() {
            w.set(&k, c);
        }
        w
    }

    /// Velocity fluctuation (mean removed) on box `m`.
    pub fn velocity_field(&self, m: usize) -> FourierVector {
        let mut v = FourierVector::zeros(m);
        for (k, c) in self.velocity_modes() {
            if !k.is_zero() {
                v.set(&k, c);
            }
        }
        v
    }

    /// Maximum of `|u|` on a uniform grid (computed once at construction).
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    fn sampled_max_speed(&self, n: usize) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [TWO_PI * i as f64 / n as f64, TWO_PI * j as f64 / n as f64];
                best = best.max(mat2::norm(&self.velocity(&x)));
            }
        }
        best
    }

    /// Stream function value.
    pub fn stream_value(&self, x: &Vec2) -> f64 {
        self.half
            .iter()
            .map(|t| {
                let (s, c) = (t.k[0] * x[0] + t.k[1] * x[1]).sin_cos();
                2.0 * (t.a * c - t.b * s)
            })
            .sum()
    }

    pub fn velocity(&self, x: &Vec2) -> Vec2 {
        let mut g = [0.0; 2];
        for t in &self.half {
            let (s, c) = (t.k[0] * x[0] + t.k[1] * x[1]).sin_cos();
            let p = -2.0 * (t.a * s + t.b * c);
            g[0] += t.k[0] * p;
            g[1] += t.k[1] * p;
        }
        [self.mean[0] - g[1], self.mean[1] + g[0]]
    }

    /// Velocity and Jacobian `Du[i][j] = ∂_j u_i`.
    pub fn eval1(&self, x: &Vec2) -> (Vec2, Mat2) {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for t in &self.half {
            let (s, c) = (t.k[0] * x[0] + t.k[1] * x[1]).sin_cos();
            let p1 = -2.0 * (t.a * s + t.b * c);
            let p2 = 2.0 * (t.b * s - t.a * c);
            for j in 0..2 {
                g[j] += t.k[j] * p1;
                for l in 0..2 {
                    h[j][l] += t.k[j] * t.k[l] * p2;
                }
            }
        }
        let u = [self.mean[0] - g[1], self.mean[1] + g[0]];
        let du = [[-h[1][0], -h[1][1]], [h[0][0], h[0][1]]];
        (u, du)
    }

    /// Velocity, Jacobian and Hessian `D²u[i][j][l] = ∂_j ∂_l u_i`.
    pub fn eval2(&self, x: &Vec2) -> (Vec2, Mat2, Tensor2) {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        let mut q = [[[0.0; 2]; 2]; 2];
        for t in &self.half {
            let (s, c) = (t.k[0] * x[0] + t.k[1] * x[1]).sin_cos();
            let p1 = -2.0 * (t.a * s + t.b * c);
            let p2 = 2.0 * (t.b * s - t.a * c);
            let p3 = 2.0 * (t.a * s + t.b * c);
            for j in 0..2 {
                g[j] += t.k[j] * p1;
                for l in 0..2 {
                    h[j][l] += t.k[j] * t.k[l] * p2;
                    for n in 0..2 {
                        q[j][l][n] += t.k[j] * t.k[l] * t.k[n] * p3;
                    }
                }
            }
        }
        let u = [self.mean[0] - g[1], self.mean[1] + g[0]];
        let du = [[-h[1][0], -h[1][1]], [h[0][0], h[0][1]]];
        let mut d2 = [[[0.0; 2]; 2]; 2];
        for j in 0..2 {
            for l in 0..2 {
                d2[0][j][l] = -q[1][j][l];
                d2[1][j][l] = q[0][j][l];
            }
        }
        (u, du, d2)
    }

    pub fn jacobian(&self, x: &Vec2) -> Mat2 {
        self.eval1(x).1
    }

    pub fn hessian(&self, x: &Vec2) -> Tensor2 {
        self.eval2(x).2
    }

    /// Exact evaluation of order 0, 1 or 2.
    pub fn eval(&self, x: &TorusPoint, order: u8) -> Result<Evaluation> {
        let p = x.as_array();
        match order {
            0 => Ok(Evaluation::Value(self.velocity(&p))),
            1 => Ok(Evaluation::Jacobian(self.jacobian(&p))),
            2 => Ok(Evaluation::Hessian(self.hessian(&p))),
            _ => Err(Error::InvalidInput(format!("derivative order {order} > 2"))),
        }
    }
}

/// `u = ∇⊥ψ` for a real, mean-zero stream function.
pub fn velocity_from_stream(psi: &FourierField) -> Result<TrigVelocityField> {
    if !psi.is_real(1e-12) {
        return Err(Error::InvalidInput(
            "stream function is not conjugate-symmetric".into(),
        ));
    }
    TrigVelocityField::new([0.0, 0.0], psi.nonzero())
}

/// Named steady states.
pub mod presets {
    use super::*;

    /// `u = (1, 0)`.
    pub fn rigid() -> TrigVelocityField {
        TrigVelocityField::new([1.0, 0.0], Vec::new()).unwrap()
    }

    /// `ψ = cos x₂`, `u = (sin x₂, 0)`.
    pub fn shear() -> TrigVelocityField {
        TrigVelocityField::new(
            [0.0, 0.0],
            vec![
                (Mode::new(0, 1), C64::new(0.5, 0.0)),
                (Mode::new(0, -1), C64::new(0.5, 0.0)),
            ],
        )
        .unwrap()
    }

    /// `ψ = sin x₁ sin x₂`, `u = (-sin x₁ cos x₂, cos x₁ sin x₂)`.
    pub fn cellular() -> TrigVelocityField {
        TrigVelocityField::new(
            [0.0, 0.0],
            vec![
                (Mode::new(1, 1), C64::new(-0.25, 0.0)),
                (Mode::new(-1, -1), C64::new(-0.25, 0.0)),
                (Mode::new(1, -1), C64::new(0.25, 0.0)),
                (Mode::new(-1, 1), C64::new(0.25, 0.0)),
            ],
        )
        .unwrap()
    }

    pub const NAMES: [&str; 3] = ["rigid", "shear", "cellular"];

    pub fn by_name(name: &str) -> Option<TrigVelocityField> {
        match name {
            "rigid" => Some(rigid()),
            "shear" => Some(shear()),
            "cellular" => Some(cellular()),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Field exchange format

pub const FIELD_HEADER: &str = "mode-coefficients v1";

/// Serialize nonzero coefficients as `k1,k2,re,im` records.
pub fn write_field(w: &FourierField) -> String {
    let mut s = String::from(FIELD_HEADER);
    s.push('\n');
    for (k, c) in w.nonzero() {
        let _ = writeln!(s, "{},{},{:.16e},{:.16e}", k.k1, k.k2, c.re, c.im);
    }
    s
}

/// Parse the exchange format; the box is the smallest containing all records.
pub fn parse_field(text: &str) -> Result<FourierField> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == FIELD_HEADER => {}
        Some((i, _)) => {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected header '{FIELD_HEADER}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty input".into(),
            })
        }
    }
    let mut modes = Vec::new();
    for (i, l) in lines {
        let parts: Vec<&str> = l.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: "expected k1,k2,re,im".into(),
            });
        }
        let bad = |m: &str| Error::Parse {
            line: i + 1,
            msg: m.to_string(),
        };
        let k1: i64 = parts[0].parse().map_err(|_| bad("bad k1"))?;
        let k2: i64 = parts[1].parse().map_err(|_| bad("bad k2"))?;
        let re: f64 = parts[2].parse().map_err(|_| bad("bad re"))?;
        let im: f64 = parts[3].parse().map_err(|_| bad("bad im"))?;
        if k1 == 0 && k2 == 0 {
            return Err(bad("(0,0) coefficient not allowed"));
        }
        modes.push((Mode::new(k1, k2), C64::new(re, im)));
    }
    let m = modes.iter().map(|(k, _)| k.box_radius()).max().unwrap_or(1).max(1) as usize;
    FourierField::from_modes(m, modes)
}

// ---------------------------------------------------------------------------
// Stagnation points

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StagnationKind {
    Hyperbolic { lambda: f64 },
    Center { omega: f64 },
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StagnationPoint {
    pub location: TorusPoint,
    pub jacobian: Mat2,
    pub kind: StagnationKind,
    pub residual: f64,
}

impl StagnationPoint {
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            StagnationKind::Hyperbolic { lambda } => Some(lambda),
            _ => None,
        }
    }
}

/// A connected set of non-isolated zeros (e.g. a stagnation line).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegenerateSet {
    pub representative: TorusPoint,
    pub members: usize,
    pub extent: [f64; 2],
}

/// Seed cell whose Newton iteration failed and which contains no known zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnresolvedCell {
    pub corner: TorusPoint,
    pub size: f64,
    pub last_residual: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StagnationReport {
    pub points: Vec<StagnationPoint>,
    pub degenerate_sets: Vec<DegenerateSet>,
    pub unresolved: Vec<UnresolvedCell>,
}

impl StagnationReport {
    pub fn hyperbolic(&self) -> impl Iterator<Item = &StagnationPoint> {
        self.points
            .iter()
            .filter(|p| matches!(p.kind, StagnationKind::Hyperbolic { .. }))
    }
}

fn classify(du: &Mat2, scale: f64) -> StagnationKind {
    let tr = mat2::trace(du);
    let d = mat2::det(du);
    let disc = tr * tr / 4.0 - d;
    let tol = 1e-10 * scale.max(1.0).powi(2);
    if disc > tol {
        StagnationKind::Hyperbolic {
            lambda: disc.sqrt(),
        }
    } else if disc < -tol {
        StagnationKind::Center {
            omega: (-disc).sqrt(),
        }
    } else {
        StagnationKind::Degenerate
    }
}

/// Levenberg–Marquardt-damped Newton iteration for `u(x) = 0`.
fn newton(u: &TrigVelocityField, start: Vec2, tol: f64, max_step: f64) -> (Vec2, f64, bool) {
    let mut x = start;
    let mut r = f64::INFINITY;
    for _ in 0..80 {
        let (v, j) = u.eval1(&x);
        r = mat2::norm(&v);
        if r <= tol {
            return (x, r, true);
        }
        // (JᵀJ + μI) δ = -Jᵀ v
        let jt = mat2::transpose(&j);
        let mut a = mat2::mul(&jt, &j);
        let mu = 1e-14 * (mat2::frobenius(&j).powi(2) + 1e-300);
        a[0][0] += mu;
        a[1][1] += mu;
        let rhs = mat2::apply(&jt, &v);
        let ainv = mat2::inverse(&a);
        let mut d = mat2::apply(&ainv, &rhs);
        let dn = mat2::norm(&d);
        if !dn.is_finite() {
            return (x, r, false);
        }
        if dn > max_step {
            d = [d[0] * max_step / dn, d[1] * max_step / dn];
        }
        x = [x[0] - d[0], x[1] - d[1]];
    }
    (x, r, r <= tol)
}

/// Zeros of `u` from a uniform grid of seed cells, refined by Newton,
/// deduplicated on the torus and sorted lexicographically by location.
///
/// Non-isolated zeros are grouped into [`DegenerateSet`]s; each set
/// contributes one representative point classified as degenerate.
pub fn find_stagnation_points(
    u: &TrigVelocityField,
    seed_grid: usize,
    tol: f64,
) -> Result<StagnationReport> {
    if u.is_zero() {
        return Err(Error::InvalidInput("u is identically zero".into()));
    }
    if tol <= 0.0 || seed_grid < 2 {
        return Err(Error::InvalidInput("need tol > 0 and seed grid ≥ 2".into()));
    }
    let n = seed_grid;
    let h = TWO_PI / n as f64;
    let node = |i: usize, j: usize| u.velocity(&[h * (i % n) as f64, h * (j % n) as f64]);
    let values: Vec<Vec<Vec2>> = (0..=n).map(|i| (0..=n).map(|j| node(i, j)).collect()).collect();

    let mut candidates = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let c = [values[i][j], values[i + 1][j], values[i][j + 1], values[i + 1][j + 1]];
            let straddles = |comp: usize| {
                let lo = c.iter().map(|v| v[comp]).fold(f64::INFINITY, f64::min);
                let hi = c.iter().map(|v| v[comp]).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if straddles(0) && straddles(1) {
                candidates.push((i, j));
            }
        }
    }

    let scale = u.max_speed();
    let mut found: Vec<(Vec2, f64)> = Vec::new();
    let mut failed = Vec::new();
    for &(i, j) in &candidates {
        let start = [h * (i as f64 + 0.5), h * (j as f64 + 0.5)];
        let (x, r, ok) = newton(u, start, tol, h);
        let x = [wrap(x[0]), wrap(x[1])];
        if ok && torus_distance(&x, &start) <= 2.0 * h {
            if !found.iter().any(|(y, _)| torus_distance(y, &x) < 1e-8) {
                found.push((x, r));
            }
        } else {
            failed.push(((i, j), r));
        }
    }
    let mut unresolved = Vec::new();
    for ((i, j), r) in failed {
        let lo = [h * i as f64, h * j as f64];
        let inside = found.iter().any(|(y, _)| {
            let d0 = wrap(y[0] - lo[0]);
            let d1 = wrap(y[1] - lo[1]);
            d0 <= h * (1.0 + 1e-9) && d1 <= h * (1.0 + 1e-9)
        });
        if !inside {
            unresolved.push(UnresolvedCell {
                corner: TorusPoint::new(lo[0], lo[1]),
                size: h,
                last_residual: r,
            });
        }
    }

    let mut isolated = Vec::new();
    let mut degenerate: Vec<Vec2> = Vec::new();
    for (x, r) in found {
        let du = u.jacobian(&x);
        let kind = classify(&du, scale);
        match kind {
            StagnationKind::Degenerate => degenerate.push(x),
            _ => isolated.push(StagnationPoint {
                location: TorusPoint::from_array(x),
                jacobian: du,
                kind,
                residual: r,
            }),
        }
    }

    // Group degenerate zeros into chains of neighbours.
    let mut parent: Vec<usize> = (0..degenerate.len()).collect();
    fn root(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for a in 0..degenerate.len() {
        for b in a + 1..degenerate.len() {
            if torus_distance(&degenerate[a], &degenerate[b]) <= 3.0 * h {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<Vec2>> = BTreeMap::new();
    for i in 0..degenerate.len() {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(degenerate[i]);
    }
    let mut sets = Vec::new();
    for (_, mut g) in groups {
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rep = g[0];
        let ext = |c: usize| {
            let lo = g.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let hi = g.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        sets.push(DegenerateSet {
            representative: TorusPoint::from_array(rep),
            members: g.len(),
            extent: [ext(0), ext(1)],
        });
        isolated.push(StagnationPoint {
            location: TorusPoint::from_array(rep),
            jacobian: u.jacobian(&rep),
            kind: StagnationKind::Degenerate,
            residual: mat2::norm(&u.velocity(&rep)),
        });
    }
    isolated.sort_by(|a, b| {
        (a.location.x1, a.location.x2)
            .partial_cmp(&(b.location.x1, b.location.x2))
            .unwrap()
    });
    sets.sort_by(|a, b| {
        (a.representative.x1, a.representative.x2)
            .partial_cmp(&(b.representative.x1, b.representative.x2))
            .unwrap()
    });
    Ok(StagnationReport {
        points: isolated,
        degenerate_sets: sets,
        unresolved,
    })
}

/// Defaults: 64×64 seeds, `|u| ≤ 1e-12`.
pub fn stagnation_points(u: &TrigVelocityField) -> StagnationReport {
    if u.is_zero() {
        return StagnationReport::default();
    }
    find_stagnation_points(u, 64, 1e-12).expect("valid defaults")
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mode_box_indexing_roundtrip() {
        let b = ModeBox::new(3);
        assert_eq!(b.len(), 48);
        for (i, k) in b.modes().enumerate() {
            assert!(!k.is_zero());
            assert_eq!(b.index(&k), Some(i));
        }
        assert_eq!(b.index(&Mode::new(0, 0)), None);
        assert_eq!(b.index(&Mode::new(4, 0)), None);
    }

    #[test]
    fn torus_point_reduction_idempotent() {
        let p = TorusPoint::new(-0.5, 7.0);
        assert_eq!(p, p.reduce());
        assert!(p.x1 >= 0.0 && p.x1 < TWO_PI);
        assert!(close(TorusPoint::new(0.1, 0.0).distance(&TorusPoint::new(TWO_PI - 0.1, 0.0)), 0.2, 1e-14));
    }

    #[test]
    fn cellular_velocity_matches_closed_form() {
        let u = cellular();
        for &(a, b) in &[(0.3, 1.1), (2.0, -0.7), (5.5, 4.4)] {
            let v = u.velocity(&[a, b]);
            assert!(close(v[0], -a.sin() * b.cos(), 1e-14));
            assert!(close(v[1], a.cos() * b.sin(), 1e-14));
        }
    }

    #[test]
    fn shear_and_rigid_velocity() {
        let v = shear().velocity(&[0.4, 1.3]);
        assert!(close(v[0], 1.3f64.sin(), 1e-15) && v[1] == 0.0);
        assert_eq!(rigid().velocity(&[2.0, 3.0]), [1.0, 0.0]);
        assert_eq!(rigid().jacobian(&[2.0, 3.0]), mat2::ZERO);
    }

    #[test]
    fn cellular_jacobians() {
        let u = cellular();
        let a = u.jacobian(&[0.0, 0.0]);
        let expect = [[-1.0, 0.0], [0.0, 1.0]];
        let b = u.jacobian(&[PI / 2.0, PI / 2.0]);
        let expect_b = [[0.0, 1.0], [-1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(a[i][j], expect[i][j], 1e-15));
                assert!(close(b[i][j], expect_b[i][j], 1e-15));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let u = cellular();
        let x = [0.7, 2.1];
        let h = 1e-5;
        let (_, du, d2) = u.eval2(&x);
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (vp, jp) = u.eval1(&xp);
            let (vm, jm) = u.eval1(&xm);
            for i in 0..2 {
                assert!(close(du[i][j], (vp[i] - vm[i]) / (2.0 * h), 1e-9));
                for l in 0..2 {
                    assert!(close(d2[i][l][j], (jp[i][l] - jm[i][l]) / (2.0 * h), 1e-9));
                }
            }
        }
    }

    #[test]
    fn velocity_from_stream_examples() {
        let psi = FourierField::from_modes(1, cellular().stream_modes().to_vec()).unwrap();
        let u = velocity_from_stream(&psi).unwrap();
        let v = u.velocity(&[0.9, 0.2]);
        assert!(close(v[0], -(0.9f64.sin()) * 0.2f64.cos(), 1e-14));
        let zero = velocity_from_stream(&FourierField::zeros(2)).unwrap();
        assert_eq!(zero.velocity(&[1.0, 2.0]), [0.0, 0.0]);
        let bad = FourierField::single(2, Mode::new(1, 0), C64::new(1.0, 0.0)).unwrap();
        assert!(velocity_from_stream(&bad).is_err());
    }

    #[test]
    fn curl_examples() {
        // v = (0,1) e^{i x1}  →  ŵ_(1,0) = i
        let mut v = FourierVector::zeros(2);
        v.set(&Mode::new(1, 0), [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let w = curl(&v);
        assert_eq!(w.get(&Mode::new(1, 0)), C64::new(0.0, 1.0));
        // curl of the cellular velocity is -2 sin x1 sin x2 = -2ψ.
        let u = cellular();
        let w = curl(&u.velocity_field(2));
        for (k, c) in u.stream_modes() {
            assert!((w.get(k) - (-2.0) * c).norm() < 1e-15);
        }
        // The rigid mean has no fluctuation to curl.
        assert!(curl(&rigid().velocity_field(2)).l2_norm() == 0.0);
    }

    #[test]
    fn curl_inverse_examples() {
        // w = e^{i x1}: v̂ = i(0, -1) = (0, -i).
        let w = FourierField::single(2, Mode::new(1, 0), C64::new(1.0, 0.0)).unwrap();
        let v = curl_inverse(&w);
        let c = v.get(&Mode::new(1, 0));
        assert!((c[0]).norm() < 1e-15 && (c[1] - C64::new(0.0, -1.0)).norm() < 1e-15);
        // w = e^{i(x1+x2)}: v̂ = i(1, -1)/2.
        let w = FourierField::single(2, Mode::new(1, 1), C64::new(1.0, 0.0)).unwrap();
        let c = curl_inverse(&w).get(&Mode::new(1, 1));
        assert!((c[0] - C64::new(0.0, 0.5)).norm() < 1e-15);
        assert!((c[1] - C64::new(0.0, -0.5)).norm() < 1e-15);
        assert_eq!(curl_inverse(&FourierField::zeros(3)).max_divergence(), 0.0);
        assert!(curl_inverse_modes(&[(Mode::new(0, 0), C64::new(1.0, 0.0))]).is_err());
    }

    #[test]
    fn curl_inverse_real_space_check() {
        // w = cos x1 must give v = (0, sin x1).
        let w = FourierField::from_modes(
            1,
            [
                (Mode::new(1, 0), C64::new(0.5, 0.0)),
                (Mode::new(-1, 0), C64::new(0.5, 0.0)),
            ],
        )
        .unwrap();
        let v = curl_inverse(&w);
        let x = 0.83;
        let mut v2 = C64::new(0.0, 0.0);
        for (i, k) in v.mbox.modes().enumerate() {
            v2 += v.c2[i] * C64::from_polar(1.0, k.k1 as f64 * x);
        }
        assert!((v2.re - x.sin()).abs() < 1e-15 && v2.im.abs() < 1e-15);
    }

    #[test]
    fn separable_evaluator_matches_direct_sum() {
        let mut w = FourierField::zeros(6);
        for (i, k) in w.mbox.modes().enumerate() {
            let s = (i as f64 * 0.37).sin();
            w.coeffs[i] = C64::new(s, 0.5 * s * s) / (1.0 + k.norm_sq());
        }
        let f = SeparableField::new(&w);
        for x in [[0.1, 0.2], [3.0, 5.5], [6.2, 0.0]] {
            let (v, g) = w.eval_grad(&x);
            let (v2, g2) = f.eval_grad(&x);
            assert!((v - v2).norm() < 1e-13 && (v - f.eval(&x)).norm() < 1e-13);
            assert!((g[0] - g2[0]).norm() < 1e-12 && (g[1] - g2[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn field_io_roundtrip() {
        let w = FourierField::from_modes(
            3,
            [
                (Mode::new(1, -2), C64::new(0.1, -0.3)),
                (Mode::new(-3, 0), C64::new(1.0 / 3.0, 2e-17)),
            ],
        )
        .unwrap();
        let text = write_field(&w);
        assert!(text.starts_with(FIELD_HEADER));
        let back = parse_field(&text).unwrap();
        assert_eq!(back, w);
        assert!(parse_field("mode-coefficients v1\n0,0,1,0\n").is_err());
        assert!(parse_field("nope\n").is_err());
    }

    #[test]
    fn cellular_stagnation_points() {
        let rep = stagnation_points(&cellular());
        assert_eq!(rep.points.len(), 8);
        assert!(rep.unresolved.is_empty());
        let h = PI / 2.0;
        let expect = [
            ((0.0, 0.0), true),
            ((0.0, PI), true),
            ((h, h), false),
            ((h, 3.0 * h), false),
            ((PI, 0.0), true),
            ((PI, PI), true),
            ((3.0 * h, h), false),
            ((3.0 * h, 3.0 * h), false),
        ];
        for (p, ((a, b), saddle)) in rep.points.iter().zip(expect) {
            assert!(close(p.location.x1, a, 1e-10) && close(p.location.x2, b, 1e-10), "{p:?}");
            match p.kind {
                StagnationKind::Hyperbolic { lambda } => {
                    assert!(saddle);
                    assert!(close(lambda, 1.0, 1e-12));
                    assert!(mat2::trace(&p.jacobian).abs() <= 1e-10);
                }
                StagnationKind::Center { .. } => assert!(!saddle),
                StagnationKind::Degenerate => panic!("unexpected degenerate point"),
            }
        }
    }

    #[test]
    fn rigid_and_shear_stagnation() {
        assert!(stagnation_points(&rigid()).points.is_empty());
        let rep = stagnation_points(&shear());
        assert_eq!(rep.degenerate_sets.len(), 2);
        assert_eq!(rep.points.len(), 2);
        assert!(rep
            .points
            .iter()
            .all(|p| p.kind == StagnationKind::Degenerate));
        let lines: Vec<f64> = rep.points.iter().map(|p| p.location.x2).collect();
        assert!(lines.iter().any(|x| close(*x, 0.0, 1e-10) || close(*x, TWO_PI, 1e-10)));
        assert!(lines.iter().any(|x| close(*x, PI, 1e-10)));
        for s in &rep.degenerate_sets {
            assert!(s.extent[0] > 5.0 && s.extent[1] < 1e-9);
        }
    }
}
