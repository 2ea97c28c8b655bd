//! Acceptance checks AC1–AC13. Each `check_*` turns computed results into a
//! [`Verdict`]; each `run_*` computes the inputs with the pinned parameters.
//! The command-line tool and the acceptance test target share these.

use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approxeig::{self, ResidualReport, SweepSpec};
use crate::error::Result;
use crate::fields::{self, presets, FourierField, TorusPoint, TWO_PI};
use crate::flow::{self, ChartResolution, StepControl, StripChart};
use crate::lyapunov::{self, BasExponent, BasSampleSpec, GlobalExponent, HigherNormGrowth};
use crate::operators::{self, GrowthOptions, SemigroupGrowth, SimilarityCheck, Spectrum};

pub const IDS: [&str; 13] = [
    "AC1", "AC2", "AC3", "AC4", "AC5", "AC6", "AC7", "AC8", "AC9", "AC10", "AC11", "AC12", "AC13",
];

/// Fixed seed for every random draw in the checks.
pub const SEED: u64 = 20_240_601;

#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct Verdict {
    pub id: String,
    pub pass: bool,
    pub measured: String,
    pub threshold: String,
    pub note: Option<String>,
}

impl Verdict {
    fn new(id: &str, pass: bool, measured: String, threshold: &str) -> Verdict {
        Verdict {
            id: id.into(),
            pass,
            measured,
            threshold: threshold.into(),
            note: None,
        }
    }

    fn with_note(mut self, note: &str) -> Verdict {
        self.note = Some(note.into());
        self
    }

    pub fn failed(id: &str, err: &crate::Error) -> Verdict {
        Verdict::new(id, false, format!("error: {err}"), "computation must succeed")
    }

    /// One line: `AC5 PASS measured | threshold [| note]`.
    pub fn line(&self) -> String {
        let mut s = format!(
            "{:<4} {} {} | {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.measured,
            self.threshold
        );
        if let Some(n) = &self.note {
            s.push_str(" | ");
            s.push_str(n);
        }
        s
    }
}

/// Run a check, turning errors into a failed verdict, and time it.
pub fn timed(id: &str, f: impl FnOnce() -> Result<Verdict>) -> (Verdict, f64) {
    let t0 = Instant::now();
    let v = f().unwrap_or_else(|e| Verdict::failed(id, &e));
    (v, t0.elapsed().as_secs_f64())
}

fn rng(offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED + offset)
}

fn random_point(r: &mut ChaCha8Rng) -> TorusPoint {
    TorusPoint::new(r.gen::<f64>() * TWO_PI, r.gen::<f64>() * TWO_PI)
}

// AC1 -----------------------------------------------------------------------

pub fn random_field(m: usize, r: &mut ChaCha8Rng) -> FourierField {
    let mut w = FourierField::zeros(m);
    for c in w.coeffs.iter_mut() {
        *c = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    }
    w
}

pub fn run_ac1() -> Result<Verdict> {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = random_field(32, &mut r);
        let back = fields::curl(&fields::curl_inverse(&w));
        let err = back.axpy(C64::new(-1.0, 0.0), &w).l2_norm() / w.l2_norm();
        worst = worst.max(err);
    }
    Ok(check_ac1(worst))
}

pub fn check_ac1(worst: f64) -> Verdict {
    Verdict::new("AC1", worst <= 1e-12, format!("max rel err {worst:.3e} over 100 fields, M=32"), "<= 1e-12")
}

// AC2 -----------------------------------------------------------------------

pub fn run_ac2() -> Result<Verdict> {
    let u = presets::cellular();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = random_point(&mut r);
        let c = flow::tangent_flow(&u, &x, 10.0, StepControl::Fixed { h: 1e-3 })?;
        worst = worst.max((c.det() - 1.0).abs());
    }
    Ok(check_ac2(worst))
}

pub fn check_ac2(worst: f64) -> Verdict {
    Verdict::new("AC2", worst <= 1e-6, format!("max |det Dphi_10 - 1| = {worst:.3e}"), "<= 1e-6")
}

// AC3 -----------------------------------------------------------------------

pub fn run_ac3() -> Result<Verdict> {
    let chart = flow::build_chart(
        &presets::cellular(),
        &TorusPoint::new(0.1, 0.0),
        6.0,
        1e-3,
        &ChartResolution::default(),
    )?;
    Ok(check_ac3(&chart))
}

pub fn check_ac3(chart: &StripChart) -> Verdict {
    let det = chart.max_det_error();
    let id = chart.max_identity_error();
    Verdict::new(
        "AC3",
        chart.injectivity_ok && det <= 1e-4 && id <= 1e-6,
        format!("injective={} max|detDH-1|={det:.3e} identity rel err={id:.3e}", chart.injectivity_ok),
        "injective, <= 1e-4, <= 1e-6",
    )
}

// AC4 -----------------------------------------------------------------------

pub fn run_ac4() -> Result<Verdict> {
    let u = presets::cellular();
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = random_point(&mut r);
        let th = r.gen::<f64>() * TWO_PI;
        let xi = [th.cos(), th.sin()];
        let tr = lyapunov::bas_trajectory(&u, &x, xi, crate::mat2::perp(&xi), 20.0)?;
        worst = worst.max(tr.first_integral_drift);
    }
    Ok(check_ac4(worst))
}

pub fn check_ac4(worst: f64) -> Verdict {
    Verdict::new("AC4", worst <= 1e-6, format!("max rel drift of |b||xi| = {worst:.3e} at T=20"), "<= 1e-6")
}

// AC5 -----------------------------------------------------------------------

pub struct Exponents {
    pub cellular: GlobalExponent,
    pub rigid: GlobalExponent,
    pub shear: GlobalExponent,
    pub stagnation: Vec<f64>,
}

pub fn run_exponents() -> Result<Exponents> {
    Ok(Exponents {
        cellular: lyapunov::global_exponent(&presets::cellular(), 30.0, 64)?,
        rigid: lyapunov::global_exponent(&presets::rigid(), 30.0, 32)?,
        shear: lyapunov::global_exponent(&presets::shear(), 30.0, 32)?,
        stagnation: lyapunov::stagnation_exponents(&presets::cellular()),
    })
}

pub fn check_ac5(e: &Exponents) -> Verdict {
    let grid = e.cellular.grid_value;
    let stag_err = e
        .stagnation
        .iter()
        .filter(|l| **l > 0.0)
        .map(|l| (l - 1.0).abs())
        .fold(f64::NAN, f64::max);
    let pass = (0.95..=1.05).contains(&grid)
        && stag_err <= 1e-10
        && e.rigid.value <= 0.05
        && e.shear.value <= 0.05;
    Verdict::new(
        "AC5",
        pass,
        format!(
            "cellular grid {grid:.4} (64^2, T=30); stagnation |lambda-1| {stag_err:.1e}; rigid {:.4}; shear {:.4}",
            e.rigid.value, e.shear.value
        ),
        "[0.95,1.05]; <= 1e-10; <= 0.05; <= 0.05",
    )
    .with_note("rigid and shear use a 32^2 grid")
}

// AC6 -----------------------------------------------------------------------

pub fn run_ac6_mu() -> Result<BasExponent> {
    let spec = BasSampleSpec {
        stagnation: true,
        random: 42,
        seed: SEED + 6,
    };
    lyapunov::bas_max_exponent(&presets::cellular(), &spec, 30.0)
}

pub fn check_ac6(mu: &BasExponent, lambda: f64) -> Verdict {
    let n = mu.per_sample.len();
    let d = (mu.value - lambda).abs();
    Verdict::new(
        "AC6",
        d <= 0.05 && n == 50,
        format!("mu = {:.4}, Lambda = {lambda:.4}, |mu - Lambda| = {d:.4}, {n} samples", mu.value),
        "<= 0.05 with 50 samples",
    )
}

// AC7 -----------------------------------------------------------------------

pub fn run_ac7() -> Result<Verdict> {
    let u = presets::cellular();
    let l = operators::assemble_l(&u, 12);
    let kernel = l.apply_field(&u.vorticity_field(12))?.l2_norm();
    let sim = operators::assemble_lvel_and_check_similarity(&u, 8);
    Ok(check_ac7(kernel, &sim))
}

pub fn check_ac7(kernel: f64, sim: &SimilarityCheck) -> Verdict {
    Verdict::new(
        "AC7",
        kernel <= 1e-12 && sim.interior_discrepancy <= 1e-10,
        format!(
            "||L curl u|| = {kernel:.3e} (M=12); interior similarity {:.3e} over {} rows (M=8)",
            sim.interior_discrepancy, sim.interior_rows
        ),
        "<= 1e-12; <= 1e-10",
    )
}

// AC8 -----------------------------------------------------------------------

pub fn run_ac8() -> Result<Verdict> {
    let s = operators::spectrum(&operators::assemble_l(&presets::rigid(), 4), 0)?;
    Ok(check_ac8(&s))
}

/// The nonzero part of the spectrum must be `{−ik₁ : 0 < |k₁| ≤ 4}` with
/// multiplicity 9 each; the `k₁ = 0` modes give the eigenvalue 0 with
/// multiplicity 8, which is reported separately.
pub fn check_ac8(s: &Spectrum) -> Verdict {
    let m = s.mode_box as i64;
    let tol = 1e-10;
    let distinct = s.distinct(tol);
    let mut ok = true;
    let mut zero_mult = 0;
    let mut worst: f64 = 0.0;
    for k1 in -m..=m {
        let z = C64::new(0.0, -(k1 as f64));
        let found = distinct.iter().find(|(w, _)| (w - z).norm() <= tol);
        match found {
            Some((w, mult)) => {
                worst = worst.max((w - z).norm());
                if k1 == 0 {
                    zero_mult = *mult;
                } else if *mult != (2 * m + 1) as usize {
                    ok = false;
                }
            }
            None if k1 != 0 => ok = false,
            None => {}
        }
    }
    let expected_total = (2 * m as usize + 1).pow(2) - 1;
    ok &= s.eigenvalues.len() == expected_total && distinct.len() == 2 * m as usize + 1;
    ok &= zero_mult == 2 * m as usize;
    Verdict::new(
        "AC8",
        ok,
        format!(
            "{} distinct clusters, multiplicity {} per k1 != 0, zero cluster multiplicity {zero_mult}, max deviation {worst:.1e}",
            distinct.len(),
            2 * m + 1
        ),
        "{-i k1 : 0<|k1|<=4} x9 within 1e-10",
    )
    .with_note(
        "eigenvalues lie on iZ (not 2 pi iZ) under the e^{ik.x} normalization; \
         the k1 = 0 modes add the eigenvalue 0 with multiplicity 8",
    )
}

// AC9 / AC11 ----------------------------------------------------------------

pub fn ac9_spec() -> SweepSpec {
    SweepSpec {
        scenario: "shear-l2".into(),
        ..approxeig::long_orbit_defaults(0.37, vec![5.0, 10.0, 20.0], 0.02)
    }
}

pub fn ac11_spec() -> SweepSpec {
    SweepSpec {
        scenario: "rigid-l2".into(),
        ..approxeig::long_orbit_defaults(0.5, vec![5.0, 10.0, 20.0], 0.02)
    }
}

pub fn check_ac9(r: &ResidualReport) -> Verdict {
    let mut ok = !r.rows.is_empty();
    let mut parts = Vec::new();
    let mut residuals = Vec::new();
    for row in &r.rows {
        let bound = 2.0 * 3f64.sqrt() / row.n;
        ok &= row.error.is_none() && row.valid && row.residual <= bound;
        residuals.push(row.residual);
        parts.push(format!("N={} s={:.2e} r={:.4} (<= {bound:.4})", row.n, row.s, row.residual));
    }
    let dec = crate::quad::strictly_decreasing(&residuals);
    ok &= dec;
    let halved = r.rows.iter().any(|row| row.halvings > 0);
    let v = Verdict::new("AC9", ok, format!("{}; decreasing={dec}", parts.join(", ")), "<= 2 sqrt3/N, strictly decreasing");
    if halved {
        v.with_note("s was halved where the strip at s = 0.02 is not an admissible chart")
    } else {
        v
    }
}

pub fn check_ac11(r: &ResidualReport) -> Verdict {
    let best = r
        .rows
        .iter()
        .filter(|row| row.residual.is_finite())
        .map(|row| row.residual)
        .fold(f64::INFINITY, f64::min);
    let computed = r.rows.iter().filter(|row| row.residual.is_finite()).count();
    Verdict::new(
        "AC11",
        computed == r.rows.len() && best >= 0.3,
        format!("best residual {best:.4} over {computed} rows"),
        ">= 0.3",
    )
    .with_note("spectral route on the box (rigid orbits are all 2 pi periodic)")
}

// AC10 ----------------------------------------------------------------------

pub fn check_ac10(r: &ResidualReport) -> Verdict {
    let mut ok = !r.rows.is_empty();
    let mut worst_ratio: f64 = 1.0;
    for row in &r.rows {
        let q = row.residual / row.predicted;
        ok &= row.error.is_none() && row.valid && (1.0 / 3.0..=3.0).contains(&q);
        if q.is_finite() {
            worst_ratio = worst_ratio.max(q.max(1.0 / q));
        } else {
            worst_ratio = f64::INFINITY;
        }
    }
    let dec = r.all_decreasing();
    let var = r.max_xi_variation();
    ok &= dec && var <= 0.25;
    Verdict::new(
        "AC10",
        ok,
        format!("worst residual/predicted factor {worst_ratio:.4}; decreasing in N={dec}; xi variation {var:.2e}"),
        "factor <= 3, decreasing, <= 0.25",
    )
}

// AC12 ----------------------------------------------------------------------

pub struct Growth {
    pub m1: SemigroupGrowth,
    pub m0: SemigroupGrowth,
}

pub fn growth_seed() -> FourierField {
    operators::gaussian_seed([0.2, 0.2], 0.2, 45)
}

pub fn run_growth() -> Result<Growth> {
    let u = presets::cellular();
    let seed = growth_seed();
    let opts = GrowthOptions::default();
    Ok(Growth {
        m1: operators::semigroup_growth_with(&u, 1, &seed, 8.0, &opts)?,
        m0: operators::semigroup_growth_with(&u, 0, &seed, 8.0, &opts)?,
    })
}

pub fn check_ac12(g: &Growth, lambda: f64) -> Verdict {
    let rel = (g.m1.exponent - lambda).abs() / lambda;
    let pass = rel <= 0.15 && g.m0.exponent.abs() <= 1e-3;
    let mut v = Verdict::new(
        "AC12",
        pass,
        format!(
            "m=1 growth {:.4} vs Lambda {lambda:.4} (rel {rel:.3}); m=0 growth {:.2e}",
            g.m1.exponent, g.m0.exponent
        ),
        "rel <= 0.15; |m0| <= 1e-3",
    );
    if !g.m1.warnings.is_empty() {
        v.note = Some(g.m1.warnings.join("; "));
    }
    v
}

// AC13 ----------------------------------------------------------------------

/// Largest relative mismatch between `D²φ_t` and central differences of
/// `Dφ_t` at a few random points.
pub fn second_variation_fd_error(t: f64, points: usize) -> Result<f64> {
    let u = presets::cellular();
    let mut r = rng(13);
    let h = 1e-4;
    let ctrl = StepControl::default();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = random_point(&mut r);
        let (_, d2) = lyapunov::second_differential(&u, &x, t)?;
        let scale = d2.iter().flatten().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for k in 0..2 {
            let mut xp = x.as_array();
            let mut xm = x.as_array();
            xp[k] += h;
            xm[k] -= h;
            let mp = flow::tangent_flow(&u, &TorusPoint::from_array(xp), t, ctrl)?.m;
            let mm = flow::tangent_flow(&u, &TorusPoint::from_array(xm), t, ctrl)?.m;
            for i in 0..2 {
                for j in 0..2 {
                    let fd = (mp[i][j] - mm[i][j]) / (2.0 * h);
                    worst = worst.max((fd - d2[i][j][k]).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

pub fn run_ac13(lambda: f64) -> Result<Verdict> {
    let g = lyapunov::higher_norm_growth(&presets::cellular(), 2, 10.0, 32)?;
    let fd = second_variation_fd_error(5.0, 8)?;
    Ok(check_ac13(&g, fd, lambda))
}

pub fn check_ac13(g: &HigherNormGrowth, fd: f64, lambda: f64) -> Verdict {
    let bound = 2.0 * lambda + 0.1;
    Verdict::new(
        "AC13",
        g.value <= bound && fd <= 1e-4,
        format!("(1/10) log max ||D2phi_10|| = {:.4} (bound {bound:.4}); FD rel err {fd:.2e}", g.value),
        "<= 2 Lambda + 0.1; <= 1e-4",
    )
}

/// All thirteen verdicts in order, with wall-clock seconds.
pub fn run_all() -> Vec<(Verdict, f64)> {
    let mut out = Vec::new();
    out.push(timed("AC1", run_ac1));
    out.push(timed("AC2", run_ac2));
    out.push(timed("AC3", run_ac3));
    out.push(timed("AC4", run_ac4));
    let t0 = Instant::now();
    let exps = run_exponents();
    let t5 = t0.elapsed().as_secs_f64();
    let lambda = exps.as_ref().map(|e| e.cellular.value).unwrap_or(1.0);
    out.push(match &exps {
        Ok(e) => (check_ac5(e), t5),
        Err(e) => (Verdict::failed("AC5", e), t5),
    });
    out.push(timed("AC6", || Ok(check_ac6(&run_ac6_mu()?, lambda))));
    out.push(timed("AC7", run_ac7));
    out.push(timed("AC8", run_ac8));
    out.push(timed("AC9", || Ok(check_ac9(&approxeig::sweep(&presets::shear(), &ac9_spec())))));
    out.push(timed("AC10", || {
        Ok(check_ac10(&approxeig::sweep(&presets::cellular(), &approxeig::saddle_defaults())))
    }));
    out.push(timed("AC11", || Ok(check_ac11(&approxeig::sweep(&presets::rigid(), &ac11_spec())))));
    out.push(timed("AC12", || Ok(check_ac12(&run_growth()?, lambda))));
    out.push(timed("AC13", || run_ac13(lambda)));
    out
}
