//! Fourier–Galerkin truncations of `A`, `K`, `L = -A + K` and the velocity
//! form `L_vel`; weighted spectra; the evolution semigroup `w ↦ w∘φ_t` and its
//! growth in `H_m`.
//!
//! Matrix conventions: rows and columns follow [`ModeBox`] order, and for
//! `L_vel` the index of component `c` at mode index `i` is `2i + c`.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{FourierField, Mode, ModeBox, SeparableField, TrigVelocityField, TWO_PI};
use crate::flow::{self, StepControl};
use crate::mat2::Vec2;
use crate::par::{self, Exec};
use crate::quad;

/// Largest mode box accepted for dense eigensolves.
pub const DENSE_CEILING: usize = 16;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    A,
    K,
    L,
    Lvel,
}

/// Sparse Galerkin matrix on a mode box.
#[derive(Clone, Debug, Serialize)]
pub struct GalerkinOperator {
    pub kind: OperatorKind,
    pub mbox: ModeBox,
    /// Sobolev index of the space the operator is considered on.
    pub sobolev_index: i32,
    pub dim: usize,
    /// Nonzero entries `(row, col, value)` sorted by row, then column.
    pub entries: Vec<(usize, usize, C64)>,
}

impl GalerkinOperator {
    fn from_columns(kind: OperatorKind, mbox: ModeBox, dim: usize, cols: Vec<Vec<(usize, C64)>>) -> Self {
        let mut entries: Vec<(usize, usize, C64)> = cols
            .into_iter()
            .enumerate()
            .flat_map(|(c, col)| col.into_iter().map(move |(r, v)| (r, c, v)))
            .filter(|e| e.2 != ZERO)
            .collect();
        entries.sort_by_key(|e| (e.0, e.1));
        GalerkinOperator {
            kind,
            mbox,
            sobolev_index: 0,
            dim,
            entries,
        }
    }

    pub fn with_sobolev_index(mut self, m: i32) -> Self {
        self.sobolev_index = m;
        self
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        match self.entries.binary_search_by_key(&(row, col), |e| (e.0, e.1)) {
            Ok(i) => self.entries[i].2,
            Err(_) => ZERO,
        }
    }

    /// Entry between two modes (scalar operators only).
    pub fn mode_entry(&self, k: &Mode, kp: &Mode) -> C64 {
        match (self.mbox.index(k), self.mbox.index(kp)) {
            (Some(r), Some(c)) => self.entry(r, c),
            _ => ZERO,
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Matrix–vector product on a scalar field with the same box.
    pub fn apply_field(&self, w: &FourierField) -> Result<FourierField> {
        if self.kind == OperatorKind::Lvel {
            return Err(Error::InvalidInput("velocity operator applied to a scalar field".into()));
        }
        if w.mbox != self.mbox {
            return Err(Error::InvalidInput(format!(
                "box mismatch: operator {} vs field {}",
                self.mbox.m, w.mbox.m
            )));
        }
        Ok(FourierField {
            mbox: self.mbox,
            coeffs: self.apply(&w.coeffs),
        })
    }

    /// `a·self + b·other` on the same box.
    pub fn lin_comb(&self, a: f64, other: &GalerkinOperator, b: f64, kind: OperatorKind) -> Result<Self> {
        if self.mbox != other.mbox || self.dim != other.dim {
            return Err(Error::InvalidInput(format!(
                "box mismatch: {} vs {}",
                self.mbox.m, other.mbox.m
            )));
        }
        let mut map: HashMap<(usize, usize), C64> = HashMap::new();
        for &(r, c, v) in &self.entries {
            *map.entry((r, c)).or_insert(ZERO) += a * v;
        }
        for &(r, c, v) in &other.entries {
            *map.entry((r, c)).or_insert(ZERO) += b * v;
        }
        let mut entries: Vec<_> = map.into_iter().filter(|e| e.1 != ZERO).map(|((r, c), v)| (r, c, v)).collect();
        entries.sort_by_key(|e| (e.0, e.1));
        Ok(GalerkinOperator {
            kind,
            mbox: self.mbox,
            sobolev_index: self.sobolev_index,
            dim: self.dim,
            entries,
        })
    }

    fn weight_of(&self, idx: usize, m: i32) -> f64 {
        let mode_idx = if self.kind == OperatorKind::Lvel { idx / 2 } else { idx };
        self.mbox.mode(mode_idx).weight(m)
    }

    /// Dense row-major `W·self·W⁻¹` with `W = diag(‖k‖^m)`.
    pub fn weighted_dense(&self, m: i32) -> Vec<C64> {
        let n = self.dim;
        let mut d = vec![ZERO; n * n];
        for &(r, c, v) in &self.entries {
            d[r * n + c] = v * (self.weight_of(r, m) / self.weight_of(c, m));
        }
        d
    }

    /// `max |(A + Aᴴ)_{ij}|`, zero for skew-adjoint matrices.
    pub fn skew_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| (v + self.entry(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Text triplets `k1,k2,k1p,k2p,re,im` (scalar operators) or
    /// `k1,k2,c,k1p,k2p,cp,re,im` for the velocity form.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if self.kind == OperatorKind::Lvel {
            s.push_str("k1,k2,c,k1p,k2p,cp,re,im\n");
            for &(r, c, v) in &self.entries {
                let (k, kp) = (self.mbox.mode(r / 2), self.mbox.mode(c / 2));
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    k.k1,
                    k.k2,
                    r % 2,
                    kp.k1,
                    kp.k2,
                    c % 2,
                    crate::fmt_float(v.re),
                    crate::fmt_float(v.im)
                );
            }
        } else {
            s.push_str("k1,k2,k1p,k2p,re,im\n");
            for &(r, c, v) in &self.entries {
                let (k, kp) = (self.mbox.mode(r), self.mbox.mode(c));
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    k.k1,
                    k.k2,
                    kp.k1,
                    kp.k2,
                    crate::fmt_float(v.re),
                    crate::fmt_float(v.im)
                );
            }
        }
        s
    }
}

fn assemble_scalar<F>(kind: OperatorKind, m: usize, exec: Exec, column: F) -> GalerkinOperator
where
    F: Fn(&ModeBox, &Mode) -> Vec<(usize, C64)> + Sync + Send,
{
    let mbox = ModeBox::new(m);
    let cols = par::map_range(exec, mbox.len(), |c| column(&mbox, &mbox.mode(c)));
    GalerkinOperator::from_columns(kind, mbox, mbox.len(), cols)
}

/// `A(k, k') = i⟨û_{k−k'}, k'⟩`, including the mean velocity at `k = k'`.
pub fn assemble_a(u: &TrigVelocityField, m: usize) -> GalerkinOperator {
    let vel = u.velocity_modes();
    assemble_scalar(OperatorKind::A, m, Exec::default(), |mbox, kp| {
        vel.iter()
            .filter_map(|(j, uh)| {
                let k = kp.add(j);
                mbox.index(&k)
                    .map(|r| (r, I * (uh[0] * kp.k1 as f64 + uh[1] * kp.k2 as f64)))
            })
            .collect()
    })
}

/// `K(k, k') = (j₁k'₂ − j₂k'₁) ω̂_j / ‖k'‖²` with `j = k − k'`, i.e.
/// `Kw = −⟨curl⁻¹w, ∇⟩ curl u`.
pub fn assemble_k(u: &TrigVelocityField, m: usize) -> GalerkinOperator {
    let vort = u.vorticity_modes();
    assemble_scalar(OperatorKind::K, m, Exec::default(), |mbox, kp| {
        vort.iter()
            .filter_map(|(j, wh)| {
                let k = kp.add(j);
                let c = (j.k1 * kp.k2 - j.k2 * kp.k1) as f64 / kp.norm_sq();
                mbox.index(&k).map(|r| (r, wh * c))
            })
            .collect()
    })
}

/// `L = −A + K`.
pub fn assemble_l(u: &TrigVelocityField, m: usize) -> GalerkinOperator {
    combine_l(&assemble_a(u, m), &assemble_k(u, m)).expect("same box")
}

/// `L = −A + K` from separately assembled parts.
pub fn combine_l(a: &GalerkinOperator, k: &GalerkinOperator) -> Result<GalerkinOperator> {
    if a.kind != OperatorKind::A || k.kind != OperatorKind::K {
        return Err(Error::InvalidInput("expected A and K".into()));
    }
    a.lin_comb(-1.0, k, 1.0, OperatorKind::L)
}

/// Velocity form `L_vel v = −P[(u·∇)v + (v·∇)u]` with the Leray projection
/// `P_k = I − kkᵀ/‖k‖²`.
pub fn assemble_lvel(u: &TrigVelocityField, m: usize) -> GalerkinOperator {
    let vel = u.velocity_modes();
    let mbox = ModeBox::new(m);
    let cols = par::map_range(Exec::default(), 2 * mbox.len(), |col| {
        let kp = mbox.mode(col / 2);
        let comp = col % 2;
        let mut out = Vec::new();
        for (j, uh) in &vel {
            let k = kp.add(j);
            let Some(r) = mbox.index(&k) else { continue };
            let adv = uh[0] * kp.k1 as f64 + uh[1] * kp.k2 as f64;
            let jc = if comp == 0 { j.k1 } else { j.k2 } as f64;
            let mut v = [-I * uh[0] * jc, -I * uh[1] * jc];
            v[comp] += -I * adv;
            let kk = [k.k1 as f64, k.k2 as f64];
            let dot = (v[0] * kk[0] + v[1] * kk[1]) / k.norm_sq();
            out.push((2 * r, v[0] - dot * kk[0]));
            out.push((2 * r + 1, v[1] - dot * kk[1]));
        }
        out
    });
    GalerkinOperator::from_columns(OperatorKind::Lvel, mbox, 2 * mbox.len(), cols)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimilarityCheck {
    /// `max |curl∘L_vel∘curl⁻¹ − L|` over interior rows.
    pub interior_discrepancy: f64,
    /// Same over all rows (includes truncation effects at the box edge).
    pub full_discrepancy: f64,
    pub interior_rows: usize,
}

/// Compare `curl ∘ L_vel` with `L ∘ curl` on divergence-free fields, i.e.
/// `curl ∘ L_vel ∘ curl⁻¹` against `L`. Interior rows are modes whose full
/// convolution stencil lies inside the box.
pub fn assemble_lvel_and_check_similarity(u: &TrigVelocityField, m: usize) -> SimilarityCheck {
    let lvel = assemble_lvel(u, m);
    let l = assemble_l(u, m);
    let mbox = lvel.mbox;
    let n = mbox.len();
    let mut stencil: Vec<Mode> = u.velocity_modes().iter().map(|(j, _)| *j).collect();
    stencil.extend(u.vorticity_modes().iter().map(|(j, _)| *j));
    let interior: Vec<bool> = mbox
        .modes()
        .map(|k| stencil.iter().all(|j| j == &k || mbox.contains(&k.sub(j))))
        .collect();
    // Column-wise: x = curl⁻¹ e_{k'}, y = L_vel x, then curl y.
    let mut by_col: Vec<Vec<(usize, C64)>> = vec![Vec::new(); 2 * n];
    for &(r, c, v) in &lvel.entries {
        by_col[c].push((r, v));
    }
    let mut full: f64 = 0.0;
    let mut inner: f64 = 0.0;
    for c in 0..n {
        let kp = mbox.mode(c);
        let sym = crate::fields::curl_inverse_symbol(&kp);
        let mut acc: HashMap<usize, C64> = HashMap::new();
        for comp in 0..2 {
            for &(r, v) in &by_col[2 * c + comp] {
                let k = mbox.mode(r / 2);
                let cs = if r % 2 == 0 {
                    -I * k.k2 as f64
                } else {
                    I * k.k1 as f64
                };
                *acc.entry(r / 2).or_insert(ZERO) += cs * v * sym[comp];
            }
        }
        for r in 0..n {
            let lhs = acc.get(&r).copied().unwrap_or(ZERO);
            let d = (lhs - l.entry(r, c)).norm();
            full = full.max(d);
            if interior[r] {
                inner = inner.max(d);
            }
        }
    }
    SimilarityCheck {
        interior_discrepancy: inner,
        full_discrepancy: full,
        interior_rows: interior.iter().filter(|b| **b).count(),
    }
}

/// `(Σ ‖k‖^{2m} |w_k|²)^{1/2}`.
pub fn sobolev_norm(w: &FourierField, m: i32) -> f64 {
    w.sobolev_norm(m)
}

// ---------------------------------------------------------------------------
// Spectra

/// Eigenvalues sorted by real part, then imaginary part (ties within `1e-9`
/// are grouped so the order is deterministic).
#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub sobolev_index: i32,
    pub mode_box: usize,
    pub eigenvalues: Vec<C64>,
}

pub const SORT_TOL: f64 = 1e-9;

pub fn sort_eigenvalues(v: &mut [C64]) {
    v.sort_by(|a, b| {
        if (a.re - b.re).abs() > SORT_TOL {
            a.re.partial_cmp(&b.re).unwrap()
        } else {
            a.im.partial_cmp(&b.im).unwrap()
        }
    });
}

impl Spectrum {
    /// Distinct values with multiplicities; values within `tol` are merged.
    pub fn distinct(&self, tol: f64) -> Vec<(C64, usize)> {
        let mut out: Vec<(C64, usize)> = Vec::new();
        for z in &self.eigenvalues {
            match out.iter_mut().find(|(w, _)| (w - z).norm() <= tol) {
                Some(e) => e.1 += 1,
                None => out.push((*z, 1)),
            }
        }
        out
    }

    pub fn min_distance(&self, z: C64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|e| (e - z).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from the vertical line `{Re z = re}` to the eigenvalue cloud.
    pub fn distance_to_vertical_line(&self, re: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|e| (e.re - re).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV `re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im\n");
        for z in &self.eigenvalues {
            let _ = writeln!(s, "{},{}", crate::fmt_float(z.re), crate::fmt_float(z.im));
        }
        s
    }
}

fn dense_eigenvalues(n: usize, d: &[C64]) -> Result<Vec<C64>> {
    use faer::complex_native::c64;
    let fro = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !fro.is_finite() {
        return Err(Error::Eigensolver(format!("non-finite matrix entries (n = {n})")));
    }
    let mat = faer::Mat::<c64>::from_fn(n, n, |i, j| {
        let z = d[i * n + j];
        c64::new(z.re, z.im)
    });
    let ev: Vec<c64> = mat.eigenvalues();
    if ev.len() != n || ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigensolver(format!(
            "no convergence for n = {n}, Frobenius norm {fro:.3e}"
        )));
    }
    Ok(ev.into_iter().map(|z| C64::new(z.re, z.im)).collect())
}

/// Eigenvalues of `W·op·W⁻¹` with `W = diag(‖k‖^m)`.
pub fn spectrum(op: &GalerkinOperator, m: i32) -> Result<Spectrum> {
    if op.mbox.m > DENSE_CEILING {
        return Err(Error::InvalidInput(format!(
            "mode box {} above the dense ceiling {DENSE_CEILING}",
            op.mbox.m
        )));
    }
    let mut ev = dense_eigenvalues(op.dim, &op.weighted_dense(m))?;
    sort_eigenvalues(&mut ev);
    Ok(Spectrum {
        sobolev_index: m,
        mode_box: op.mbox.m,
        eigenvalues: ev,
    })
}

/// Eigenvalues of the matrix exponential `exp(t·W op W⁻¹)`.
pub fn exp_spectrum(op: &GalerkinOperator, m: i32, t: f64) -> Result<Vec<C64>> {
    if op.mbox.m > DENSE_CEILING {
        return Err(Error::InvalidInput("mode box above the dense ceiling".into()));
    }
    let n = op.dim;
    let d = op.weighted_dense(m);
    let mat = nalgebra::DMatrix::<C64>::from_fn(n, n, |i, j| d[i * n + j] * t);
    let e = mat.exp();
    let flat: Vec<C64> = (0..n * n).map(|k| e[(k / n, k % n)]).collect();
    dense_eigenvalues(n, &flat)
}

/// Largest distance in a greedy nearest matching between `σ(exp(tL))` and
/// `exp(t σ(L))`.
pub fn spectral_inclusion_error(op: &GalerkinOperator, m: i32, t: f64) -> Result<f64> {
    let direct: Vec<C64> = spectrum(op, m)?.eigenvalues.iter().map(|z| (z * t).exp()).collect();
    let mut of_exp = exp_spectrum(op, m, t)?;
    let mut worst: f64 = 0.0;
    for z in direct {
        let (i, d) = of_exp
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - z).norm()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        worst = worst.max(d);
        of_exp.swap_remove(i);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Evolution semigroup

/// Tail fraction above which a pushforward carries an aliasing warning.
pub const ALIAS_WARN: f64 = 1e-4;
/// Tail fraction at which growth measurements fail.
pub const ALIAS_FAIL: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub struct PushforwardOptions {
    pub step: StepControl,
    pub exec: Exec,
}

impl Default for PushforwardOptions {
    fn default() -> Self {
        PushforwardOptions {
            step: StepControl::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pushforward {
    pub field: FourierField,
    /// Fraction of `L₂` mass in modes with `max|k_i| > n/3`.
    pub tail: f64,
    pub aliasing_warning: bool,
    /// Modulus of the discarded `(0,0)` coefficient.
    pub mean_residual: f64,
}

fn grid_node(n: usize, idx: usize) -> Vec2 {
    let h = TWO_PI / n as f64;
    [h * (idx / n) as f64, h * (idx % n) as f64]
}

/// Forward 2D DFT of grid values (row index ↔ `x₁`), normalized by `n²`.
fn grid_coefficients(n: usize, values: &[C64], planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let fft = planner.plan_fft_forward(n);
    let mut a = values.to_vec();
    for row in a.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![ZERO; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = a[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            a[i * n + j] = col[i];
        }
    }
    let s = 1.0 / (n * n) as f64;
    a.iter_mut().for_each(|z| *z *= s);
    a
}

fn grid_to_field(n: usize, coeffs: &[C64]) -> Pushforward {
    let m = n / 2 - 1;
    let mut field = FourierField::zeros(m);
    let wrap = |k: i64| k.rem_euclid(n as i64) as usize;
    for (i, k) in field.mbox.modes().enumerate().collect::<Vec<_>>() {
        field.coeffs[i] = coeffs[wrap(k.k1) * n + wrap(k.k2)];
    }
    let cut = n as f64 / 3.0;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (idx, c) in coeffs.iter().enumerate() {
        if idx == 0 {
            continue;
        }
        let signed = |i: usize| if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
        let r = signed(idx / n).abs().max(signed(idx % n).abs());
        let e = c.norm_sqr();
        total += e;
        if r > cut {
            tail += e;
        }
    }
    let tail = if total > 0.0 { tail / total } else { 0.0 };
    Pushforward {
        field,
        tail,
        aliasing_warning: tail > ALIAS_WARN,
        mean_residual: coeffs[0].norm(),
    }
}

fn check_grid(w: &FourierField, n: usize) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!("grid size {n} must be even and ≥ 4")));
    }
    if 2 * w.mbox.m >= n {
        return Err(Error::InvalidInput(format!(
            "field box {} is not resolved by a {n}² grid",
            w.mbox.m
        )));
    }
    Ok(())
}

/// `e^{tA}w = w∘φ_t`: sample `w` at `φ_t(x)` on an `n×n` grid and re-expand on
/// the box `n/2 − 1`.
pub fn pushforward(w: &FourierField, u: &TrigVelocityField, t: f64, grid: usize) -> Result<Pushforward> {
    pushforward_with(w, u, t, grid, PushforwardOptions::default())
}

pub fn pushforward_with(
    w: &FourierField,
    u: &TrigVelocityField,
    t: f64,
    grid: usize,
    opts: PushforwardOptions,
) -> Result<Pushforward> {
    check_grid(w, grid)?;
    let eval = SeparableField::new(w);
    let vals = par::map_range(opts.exec, grid * grid, |idx| {
        flow::flow_lifted(u, grid_node(grid, idx), t, opts.step).map(|y| eval.eval(&y))
    });
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    let mut planner = FftPlanner::new();
    Ok(grid_to_field(grid, &grid_coefficients(grid, &vals, &mut planner)))
}

/// Periodized Gaussian bump `exp(−|x−c|²/2σ²)` with its mean removed, on
/// box `m`: `ŵ_k = (σ²/2π) e^{−σ²‖k‖²/2 − ik·c}`.
pub fn gaussian_seed(center: Vec2, sigma: f64, m: usize) -> FourierField {
    let mut w = FourierField::zeros(m);
    let a = sigma * sigma / TWO_PI;
    for i in 0..w.coeffs.len() {
        let k = w.mbox.mode(i);
        let ph = -(k.k1 as f64 * center[0] + k.k2 as f64 * center[1]);
        w.coeffs[i] = C64::from_polar(a * (-0.5 * sigma * sigma * k.norm_sq()).exp(), ph);
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthMethod {
    /// Grid average of `|w∘φ_t|²` (`m = 0`).
    EulerianQuadrature,
    /// Change of variables `x = φ_{−t}(y)` on an adaptive quadtree:
    /// `∫ |w(y)|² |det M| dy` (`m = 0`) or `∫ |M^{−ᵀ}∇w(y)|² |det M| dy`
    /// (`m = 1`) with `M = Dφ_{−t}(y)`.
    LagrangianQuadtree,
    /// `H_m` norm of the re-expanded pushforward.
    SpectralPushforward,
}

#[derive(Clone, Copy, Debug)]
pub struct GrowthOptions {
    pub sample_dt: f64,
    /// Grid for the Eulerian and spectral methods.
    pub grid: usize,
    pub step: StepControl,
    /// Target relative quadrature error (Lagrangian method).
    pub rel_tol: f64,
    /// Point budget for the quadtree.
    pub max_points: usize,
    /// Override of the default method (`Lagrangian` for `m ∈ {0, 1}`,
    /// spectral otherwise).
    pub method: Option<GrowthMethod>,
    pub exec: Exec,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            sample_dt: 0.25,
            grid: 128,
            step: StepControl::Fixed { h: 1e-2 },
            rel_tol: 1e-3,
            max_points: 250_000,
            method: None,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SemigroupGrowth {
    pub sobolev_index: i32,
    /// Least-squares slope of `log ‖w∘φ_t‖_{H_m}` over `[T/2, T]`.
    pub exponent: f64,
    pub method: GrowthMethod,
    /// `(t, ‖w∘φ_t‖_{H_m})`.
    pub samples: Vec<(f64, f64)>,
    pub max_tail: f64,
    /// Quadrature points used (Lagrangian) or grid nodes.
    pub points: usize,
    pub warnings: Vec<String>,
}

/// Exponential growth rate of `t ↦ ‖w∘φ_t‖_{H_m}` on `[T/2, T]`.
pub fn semigroup_growth(u: &TrigVelocityField, m: i32, seed: &FourierField, t: f64) -> Result<SemigroupGrowth> {
    semigroup_growth_with(u, m, seed, t, &GrowthOptions::default())
}

pub fn semigroup_growth_with(
    u: &TrigVelocityField,
    m: i32,
    seed: &FourierField,
    t: f64,
    opts: &GrowthOptions,
) -> Result<SemigroupGrowth> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon {t} must be positive")));
    }
    if !(opts.sample_dt > 0.0) {
        return Err(Error::InvalidInput("sample spacing must be positive".into()));
    }
    let n = (t / opts.sample_dt).round().max(1.0) as usize;
    let dt = t / n as f64;
    let times: Vec<f64> = (0..=n).map(|k| dt * k as f64).collect();
    let method = opts.method.unwrap_or(match m {
        0 | 1 => GrowthMethod::LagrangianQuadtree,
        _ => GrowthMethod::SpectralPushforward,
    });
    let (norms, method, max_tail, points, warnings) = match method {
        GrowthMethod::EulerianQuadrature if m == 0 => eulerian(u, seed, dt, n, opts)?,
        GrowthMethod::LagrangianQuadtree if m == 0 || m == 1 => lagrangian(u, m, seed, dt, n, opts)?,
        GrowthMethod::SpectralPushforward => spectral_growth(u, m, seed, dt, n, opts)?,
        other => {
            return Err(Error::InvalidInput(format!("method {other:?} does not support m = {m}")));
        }
    };
    let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let exponent = quad::ls_slope_from(&times, &logs, 0.5 * t);
    Ok(SemigroupGrowth {
        sobolev_index: m,
        exponent,
        method,
        samples: times.into_iter().zip(norms).collect(),
        max_tail,
        points,
        warnings,
    })
}

type GrowthParts = (Vec<f64>, GrowthMethod, f64, usize, Vec<String>);

/// Grid values of `w∘φ_{t_k}` for every sample time, per node.
fn node_histories(
    u: &TrigVelocityField,
    eval: &SeparableField,
    grid: usize,
    dt: f64,
    n: usize,
    opts: &GrowthOptions,
) -> Result<Vec<Vec<C64>>> {
    let f = flow::position_rhs(u);
    let rows = par::map_range(opts.exec, grid * grid, |idx| -> Result<Vec<C64>> {
        let path = flow::lattice(&f, grid_node(grid, idx), dt, n, opts.step)?;
        Ok(path.iter().map(|y| eval.eval(y)).collect())
    });
    rows.into_iter().collect()
}

fn eulerian(u: &TrigVelocityField, w: &FourierField, dt: f64, n: usize, opts: &GrowthOptions) -> Result<GrowthParts> {
    check_grid(w, opts.grid)?;
    let eval = SeparableField::new(w);
    let hist = node_histories(u, &eval, opts.grid, dt, n, opts)?;
    let nodes = (opts.grid * opts.grid) as f64;
    let norms = (0..=n)
        .map(|k| (hist.iter().map(|h| h[k].norm_sqr()).sum::<f64>() / nodes).sqrt())
        .collect();
    Ok((norms, GrowthMethod::EulerianQuadrature, 0.0, opts.grid * opts.grid, Vec::new()))
}

fn spectral_growth(
    u: &TrigVelocityField,
    m: i32,
    w: &FourierField,
    dt: f64,
    n: usize,
    opts: &GrowthOptions,
) -> Result<GrowthParts> {
    check_grid(w, opts.grid)?;
    let g = opts.grid;
    let eval = SeparableField::new(w);
    let hist = node_histories(u, &eval, g, dt, n, opts)?;
    let mut planner = FftPlanner::new();
    let mut norms = Vec::with_capacity(n + 1);
    let mut max_tail: f64 = 0.0;
    let mut warnings = Vec::new();
    for k in 0..=n {
        let vals: Vec<C64> = hist.iter().map(|h| h[k]).collect();
        let pf = grid_to_field(g, &grid_coefficients(g, &vals, &mut planner));
        if pf.tail > ALIAS_FAIL {
            return Err(Error::Aliasing {
                tail: pf.tail,
                limit: ALIAS_FAIL,
            });
        }
        if pf.aliasing_warning {
            warnings.push(format!("aliasing tail {:.3e} at t = {:.3}", pf.tail, dt * k as f64));
        }
        max_tail = max_tail.max(pf.tail);
        norms.push(pf.field.sobolev_norm(m));
    }
    Ok((norms, GrowthMethod::SpectralPushforward, max_tail, g * g, warnings))
}

/// Depth below the base quadtree level available for refinement.
const QT_DEPTH: u32 = 24;
const QT_BASE: u64 = 16;

fn lagrangian(
    u: &TrigVelocityField,
    m: i32,
    w: &FourierField,
    dt: f64,
    n: usize,
    opts: &GrowthOptions,
) -> Result<GrowthParts> {
    let eval = SeparableField::new(w);
    let f = flow::tangent_rhs(u);
    let unit = TWO_PI / (QT_BASE << QT_DEPTH) as f64;
    let integrand = |key: (u64, u64)| -> Result<Vec<f64>> {
        let y = [key.0 as f64 * unit, key.1 as f64 * unit];
        let (v, g) = eval.eval_grad(&y);
        let ys = flow::lattice(&f, flow::tangent_init(&y), -dt, n, opts.step)?;
        Ok(ys
            .iter()
            .map(|s| {
                let (_, mm) = flow::unpack_tangent(s);
                let det = mm[0][0] * mm[1][1] - mm[0][1] * mm[1][0];
                if m == 0 {
                    return v.norm_sqr() * det.abs();
                }
                let it = [[mm[1][1] / det, -mm[1][0] / det], [-mm[0][1] / det, mm[0][0] / det]];
                let a = it[0][0] * g[0] + it[0][1] * g[1];
                let b = it[1][0] * g[0] + it[1][1] * g[1];
                (a.norm_sqr() + b.norm_sqr()) * det.abs()
            })
            .collect())
    };
    let mut cache: HashMap<(u64, u64), Vec<f64>> = HashMap::new();
    let full = 1u64 << QT_DEPTH;
    // Cells are (x, y, size) in finest units.
    let mut cells: Vec<(u64, u64, u64)> = (0..QT_BASE * QT_BASE)
        .map(|i| ((i / QT_BASE) * full, (i % QT_BASE) * full, full))
        .collect();
    let mut warnings = Vec::new();
    let period = QT_BASE << QT_DEPTH;
    let norm = 1.0 / (TWO_PI * TWO_PI);
    loop {
        // Evaluate missing nodes.
        let mut missing: Vec<(u64, u64)> = Vec::new();
        for &(x, y, s) in &cells {
            let h = s / 2;
            for a in 0..3 {
                for b in 0..3 {
                    let key = ((x + a * h) % period, (y + b * h) % period);
                    if !cache.contains_key(&key) {
                        missing.push(key);
                    }
                }
            }
        }
        missing.sort_unstable();
        missing.dedup();
        let vals = par::map_slice(opts.exec, &missing, |k| integrand(*k));
        for (k, v) in missing.into_iter().zip(vals) {
            cache.insert(k, v?);
        }
        // Simpson and composite-trapezoid estimates per cell.
        let mut simpson = vec![0.0; n + 1];
        let mut cell_err: Vec<Vec<f64>> = Vec::with_capacity(cells.len());
        let mut total_err = vec![0.0; n + 1];
        for &(x, y, s) in &cells {
            let h = s / 2;
            let area = (s as f64 * unit).powi(2);
            let ws = [1.0, 4.0, 1.0];
            let wt = [1.0, 2.0, 1.0];
            let mut sv = vec![0.0; n + 1];
            let mut tv = vec![0.0; n + 1];
            for a in 0..3u64 {
                for b in 0..3u64 {
                    let v = &cache[&((x + a * h) % period, (y + b * h) % period)];
                    let cs = ws[a as usize] * ws[b as usize] / 36.0 * area;
                    let ct = wt[a as usize] * wt[b as usize] / 16.0 * area;
                    for k in 0..=n {
                        sv[k] += cs * v[k];
                        tv[k] += ct * v[k];
                    }
                }
            }
            let e: Vec<f64> = sv.iter().zip(&tv).map(|(a, b)| (a - b).abs()).collect();
            for k in 0..=n {
                simpson[k] += sv[k];
                total_err[k] += e[k];
            }
            cell_err.push(e);
        }
        let worst = (0..=n)
            .map(|k| total_err[k] / simpson[k].max(1e-300))
            .fold(0.0, f64::max);
        if worst <= opts.rel_tol {
            let norms = simpson.iter().map(|v| (v * norm).sqrt()).collect();
            return Ok((norms, GrowthMethod::LagrangianQuadtree, 0.0, cache.len(), warnings));
        }
        if cache.len() >= opts.max_points {
            warnings.push(format!(
                "quadtree point budget {} reached with relative error estimate {worst:.3e}",
                opts.max_points
            ));
            let norms = simpson.iter().map(|v| (v * norm).sqrt()).collect();
            return Ok((norms, GrowthMethod::LagrangianQuadtree, 0.0, cache.len(), warnings));
        }
        // Refine every cell whose share of the error exceeds an equal split of
        // the tolerance in any time component.
        let share = opts.rel_tol / cells.len() as f64;
        let mut next = Vec::with_capacity(cells.len() * 2);
        let mut refined = 0;
        let prio: Vec<f64> = cell_err
            .iter()
            .map(|e| (0..=n).map(|k| e[k] / simpson[k].max(1e-300)).fold(0.0, f64::max))
            .collect();
        let top = prio.iter().cloned().fold(0.0, f64::max);
        for (c, p) in cells.iter().zip(&prio) {
            let (x, y, s) = *c;
            if (*p > share || *p >= top) && s >= 2 {
                let h = s / 2;
                next.extend_from_slice(&[(x, y, h), (x + h, y, h), (x, y + h, h), (x + h, y + h, h)]);
                refined += 1;
            } else {
                next.push(*c);
            }
        }
        if refined == 0 {
            warnings.push("quadtree reached its depth limit".into());
            let norms = simpson.iter().map(|v| (v * norm).sqrt()).collect();
            return Ok((norms, GrowthMethod::LagrangianQuadtree, 0.0, cache.len(), warnings));
        }
        cells = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::presets::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn a_examples() {
        let a = assemble_a(&rigid(), 3);
        assert_eq!(a.nnz(), 3 * 7 * 2);
        for (i, k) in a.mbox.modes().enumerate() {
            assert_eq!(a.entry(i, i), c(0.0, k.k1 as f64));
        }
        let a = assemble_a(&cellular(), 4);
        let k = Mode::new(1, 2);
        let r = a.mbox.index(&k).unwrap();
        for &(row, col, _) in &a.entries {
            if row == r {
                let d = k.sub(&a.mbox.mode(col));
                assert!(d.k1.abs() == 1 && d.k2.abs() == 1, "{d:?}");
            }
        }
        let zero = TrigVelocityField::new([0.0, 0.0], vec![]).unwrap();
        assert_eq!(assemble_a(&zero, 3).nnz(), 0);
        assert!(a.skew_defect() <= 1e-12);
    }

    #[test]
    fn k_hand_oracle() {
        let k = assemble_k(&cellular(), 3);
        let kp = Mode::new(1, 1);
        assert!((k.mode_entry(&Mode::new(2, 0), &kp) - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((k.mode_entry(&Mode::new(0, 2), &kp) - c(0.5, 0.0)).norm() < 1e-15);
        let col = k.mbox.index(&kp).unwrap();
        assert_eq!(k.entries.iter().filter(|e| e.1 == col).count(), 2);
        assert_eq!(assemble_k(&rigid(), 3).nnz(), 0);
    }

    #[test]
    fn k_real_space_oracle() {
        // Kw = −v·∇ω with v = curl⁻¹w, evaluated pointwise.
        let u = cellular();
        let w = FourierField::single(3, Mode::new(1, 1), c(1.0, 0.0)).unwrap();
        let kw = assemble_k(&u, 3).apply_field(&w).unwrap();
        for x in [[0.3, 1.7], [2.5, 4.0]] {
            let e = C64::from_polar(1.0, x[0] + x[1]);
            let v = [c(0.0, 0.5) * e, c(0.0, -0.5) * e];
            let grad_omega = [
                -2.0 * x[0].cos() * x[1].sin(),
                -2.0 * x[0].sin() * x[1].cos(),
            ];
            let direct = -(v[0] * grad_omega[0] + v[1] * grad_omega[1]);
            assert!((kw.eval(&x) - direct).norm() < 1e-14);
        }
    }

    #[test]
    fn l_kernel_and_box_mismatch() {
        let u = cellular();
        let l = assemble_l(&u, 12);
        let w = u.vorticity_field(12);
        let lw = l.apply_field(&w).unwrap();
        assert!(lw.l2_norm() <= 1e-12);
        assert!(combine_l(&assemble_a(&u, 3), &assemble_k(&u, 4)).is_err());
        assert!(l.apply_field(&FourierField::zeros(5)).is_err());
    }

    #[test]
    fn similarity_examples() {
        for u in [rigid(), cellular(), shear()] {
            let s = assemble_lvel_and_check_similarity(&u, 8);
            assert!(s.interior_discrepancy <= 1e-10, "{s:?}");
        }
        assert!(assemble_lvel_and_check_similarity(&rigid(), 4).full_discrepancy <= 1e-14);
    }

    #[test]
    fn sobolev_examples() {
        let w = FourierField::single(5, Mode::new(3, 4), c(1.0, 0.0)).unwrap();
        assert_eq!(sobolev_norm(&w, 2), 25.0);
        let v = FourierField::single(2, Mode::new(1, 0), c(1.0, 0.0)).unwrap();
        assert_eq!(sobolev_norm(&v, -1), 1.0);
        assert_eq!(sobolev_norm(&w, 0), w.l2_norm());
    }

    #[test]
    fn rigid_spectrum() {
        let s = spectrum(&assemble_l(&rigid(), 4), 0).unwrap();
        assert_eq!(s.eigenvalues.len(), 80);
        let d = s.distinct(1e-10);
        for (z, mult) in d {
            assert!(z.re.abs() < 1e-12);
            let k1 = -z.im;
            assert!((k1 - k1.round()).abs() < 1e-12);
            assert_eq!(mult, if k1.round() == 0.0 { 8 } else { 9 });
        }
    }

    #[test]
    fn cellular_spectrum_contains_zero() {
        let s = spectrum(&assemble_l(&cellular(), 12), 0).unwrap();
        assert!(s.min_distance(c(0.0, 0.0)) <= 1e-10);
        let zero = TrigVelocityField::new([0.0, 0.0], vec![]).unwrap();
        let z = spectrum(&assemble_l(&zero, 2), 0).unwrap();
        assert!(z.eigenvalues.iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn rigid_pushforward_is_a_phase() {
        let w = FourierField::from_modes(3, [(Mode::new(1, 2), c(0.3, 0.1)), (Mode::new(-2, 1), c(-0.2, 0.4))]).unwrap();
        let t = 0.7;
        let p = pushforward(&w, &rigid(), t, 16).unwrap();
        for (k, v) in w.iter() {
            let expect = v * C64::from_polar(1.0, k.k1 as f64 * t);
            assert!((p.field.get(&k) - expect).norm() < 1e-12);
        }
        assert!((p.field.l2_norm() - w.l2_norm()).abs() < 1e-13);
        let id = pushforward(&w, &cellular(), 0.0, 16).unwrap();
        for (k, v) in w.iter() {
            assert!((id.field.get(&k) - v).norm() < 1e-14);
        }
    }

    #[test]
    fn rigid_growth_vanishes() {
        let seed = gaussian_seed([1.0, 2.0], 0.5, 12);
        let opts = GrowthOptions {
            grid: 32,
            ..GrowthOptions::default()
        };
        for m in [0, 1, 2] {
            let g = semigroup_growth_with(&rigid(), m, &seed, 2.0, &opts).unwrap();
            assert!(g.exponent.abs() < 1e-6, "m = {m}: {}", g.exponent);
            assert!((g.samples[0].1 - seed.sobolev_norm(m)).abs() < 1e-3 * seed.sobolev_norm(m));
        }
        let e = GrowthOptions {
            method: Some(GrowthMethod::EulerianQuadrature),
            ..opts
        };
        assert!(semigroup_growth_with(&rigid(), 1, &seed, 2.0, &e).is_err());
        assert!(semigroup_growth(&rigid(), 0, &seed, -1.0).is_err());
    }

    #[test]
    fn rigid_exp_spectrum_matches() {
        let l = assemble_l(&rigid(), 3);
        assert!(spectral_inclusion_error(&l, 0, 0.5).unwrap() < 1e-10);
        assert!(spectrum(&assemble_l(&rigid(), 17), 0).is_err());
    }
}
