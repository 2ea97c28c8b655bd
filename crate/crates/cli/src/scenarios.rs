//! One runner per scenario. Each produces the CSV body, a JSON summary and
//! the acceptance verdicts it is responsible for.

use std::fmt::Write as _;

use lyapspec_core::acceptance::{self, Verdict};
use lyapspec_core::approxeig::{self, BaseStrategy, SweepSpec};
use lyapspec_core::fields::{self, presets, StagnationKind};
use lyapspec_core::flow::{self, ChartResolution, StepControl};
use lyapspec_core::lyapunov::{self, BasSampleSpec};
use lyapspec_core::operators::{self, GrowthOptions};
use lyapspec_core::{fmt_float, orbits, Error, TrigVelocityField};
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig, Scenario};

pub struct Output {
    pub csv: String,
    pub summary: Value,
    pub verdicts: Vec<(Verdict, f64)>,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Compute(Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Compute(e)
    }
}

type RResult<T> = Result<T, RunError>;

pub fn run(cfg: &RunConfig) -> RResult<Output> {
    let u = cfg.flow()?;
    let mut out = match cfg.scenario {
        Scenario::FlowInfo => flow_info(cfg, &u)?,
        Scenario::Lyapunov => lyapunov_run(cfg, &u)?,
        Scenario::Bas => bas(cfg, &u)?,
        Scenario::Spectrum => spectrum(cfg, &u)?,
        Scenario::ApproxEig => approx_eig(cfg, &u)?,
        Scenario::SemigroupGrowth => semigroup(cfg, &u)?,
        Scenario::Orbits => orbits_run(cfg, &u)?,
        Scenario::Report => unreachable!("report is handled separately"),
    };
    if !cfg.bool("acceptance")? {
        out.verdicts.clear();
    }
    Ok(out)
}

/// Largest exact stagnation exponent of the cellular flow, the reference `Λ`
/// for the amplitude-system and second-differential checks.
fn cellular_lambda() -> f64 {
    lyapunov::stagnation_exponents(&presets::cellular())
        .into_iter()
        .fold(0.0, f64::max)
}

fn wants(cfg: &RunConfig, flow: &str) -> bool {
    cfg.bool("acceptance").unwrap_or(false) && cfg.flow_name() == flow
}

fn flow_info(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let report = fields::stagnation_points(u);
    let predicate = orbits::long_orbit_predicate(u);
    let csv = match cfg.point("x0")? {
        Some(x0) => {
            let t = cfg.f64("T")?;
            let n = (t / 0.01).round().max(1.0) as usize;
            let states = flow::tangent_samples(u, &x0, t / n as f64, n, StepControl::default())?;
            flow::trajectory_csv(&states)
        }
        None => {
            let mut s = String::from("x1,x2,kind,rate,residual\n");
            for p in &report.points {
                let (kind, rate) = match p.kind {
                    StagnationKind::Hyperbolic { lambda } => ("hyperbolic", fmt_float(lambda)),
                    StagnationKind::Center { omega } => ("center", fmt_float(omega)),
                    StagnationKind::Degenerate => ("degenerate", "nan".into()),
                };
                let _ = writeln!(
                    s,
                    "{},{},{kind},{rate},{}",
                    fmt_float(p.location.x1),
                    fmt_float(p.location.x2),
                    fmt_float(p.residual)
                );
            }
            s
        }
    };
    let summary = json!({
        "stagnation_points": report.points,
        "degenerate_sets": report.degenerate_sets,
        "unresolved_cells": report.unresolved,
        "max_speed": u.max_speed(),
        "long_orbit_predicate": predicate,
    });
    let mut verdicts = Vec::new();
    if cfg.bool("acceptance")? {
        verdicts.push(acceptance::timed("AC1", acceptance::run_ac1));
    }
    if wants(cfg, "cellular") {
        verdicts.push(acceptance::timed("AC2", acceptance::run_ac2));
        verdicts.push(acceptance::timed("AC3", acceptance::run_ac3));
    }
    Ok(Output { csv, summary, verdicts })
}

fn lyapunov_run(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let t = cfg.f64("T")?;
    let grid = cfg.usize("grid")?;
    let m = cfg.i32("m")?;
    if !(1..=2).contains(&m) {
        return Err(ConfigError::at_key("m", "lyapunov supports m = 1 or m = 2").into());
    }
    let exec = cfg.exec();
    let start = std::time::Instant::now();
    let g = lyapunov::global_exponent_with(exec, u, t, grid, StepControl::default())?;
    let g_secs = start.elapsed().as_secs_f64();
    let higher = if m == 2 {
        Some(lyapunov::higher_norm_growth_with(exec, u, 2, t, grid, StepControl::default())?)
    } else {
        None
    };
    let summary = json!({
        "lambda": g.value,
        "source": g.source,
        "grid_value": g.grid_value,
        "grid_raw_value": g.grid_raw_value,
        "grid_argmax": g.grid_argmax,
        "stagnation_value": g.stagnation_value,
        "stagnation_exponents": lyapunov::stagnation_exponents(u),
        "trace": g.trace,
        "higher_norm_growth": higher.as_ref().map(|h| json!({
            "order": h.order, "value": h.value, "argmax": h.argmax, "vanishes": h.vanishes,
        })),
    });
    let mut verdicts = Vec::new();
    if wants(cfg, "cellular") {
        let lambda = cellular_lambda();
        let t0 = std::time::Instant::now();
        let pinned = t == 30.0 && grid == 64;
        let ex = (|| -> lyapspec_core::Result<acceptance::Exponents> {
            let cellular = if pinned {
                g.clone()
            } else {
                lyapunov::global_exponent(&presets::cellular(), 30.0, 64)?
            };
            Ok(acceptance::Exponents {
                cellular,
                rigid: lyapunov::global_exponent(&presets::rigid(), 30.0, 32)?,
                shear: lyapunov::global_exponent(&presets::shear(), 30.0, 32)?,
                stagnation: lyapunov::stagnation_exponents(&presets::cellular()),
            })
        })();
        let secs = t0.elapsed().as_secs_f64() + if pinned { g_secs } else { 0.0 };
        verdicts.push(match ex {
            Ok(e) => (acceptance::check_ac5(&e), secs),
            Err(e) => (Verdict::failed("AC5", &e), secs),
        });
        verdicts.push(acceptance::timed("AC13", || acceptance::run_ac13(lambda)));
    }
    Ok(Output {
        csv: g.field_csv(),
        summary,
        verdicts,
    })
}

fn bas(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let t = cfg.f64("T")?;
    let spec = BasSampleSpec {
        stagnation: true,
        random: cfg.usize("samples")?,
        seed: cfg.u64("seed")?,
    };
    let m = cfg.i32("m")?;
    let mu = lyapunov::weighted_b_exponent_with(cfg.exec(), u, m, &spec, t)?;
    // The dumped trajectory starts at x0 when given, otherwise at the maximizing sample.
    let (x0, xi0) = match cfg.point("x0")? {
        Some(x) => {
            let a = cfg.f64("angle")?;
            (x, [a.cos(), a.sin()])
        }
        None => {
            let (x, xi, _) = mu.per_sample[mu.argmax];
            (x, xi)
        }
    };
    let tr = lyapunov::bas_trajectory(u, &x0, xi0, lyapspec_core::mat2::perp(&xi0), t)?;
    let summary = json!({
        "mu": mu.value,
        "weight_index": mu.weight_index,
        "argmax": mu.argmax,
        "max_drift": mu.max_drift,
        "samples": mu.per_sample.len(),
        "trajectory": { "x0": x0, "xi0": xi0, "first_integral_drift": tr.first_integral_drift },
    });
    let mut verdicts = Vec::new();
    if wants(cfg, "cellular") {
        let lambda = cellular_lambda();
        verdicts.push(acceptance::timed("AC4", acceptance::run_ac4));
        verdicts.push(acceptance::timed("AC6", || {
            Ok(acceptance::check_ac6(&acceptance::run_ac6_mu()?, lambda))
        }));
    }
    Ok(Output {
        csv: tr.to_csv(),
        summary,
        verdicts,
    })
}

fn spectrum(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let mbox = cfg.usize("M")?;
    let m = cfg.i32("m")?;
    let l = operators::assemble_l(u, mbox);
    let summary;
    let csv = if cfg.get("output") == Some("operator") {
        summary = json!({ "dim": l.dim, "nnz": l.nnz() });
        l.to_csv()
    } else {
        let s = operators::spectrum(&l, m)?;
        let distinct = s.distinct(1e-10);
        summary = json!({
            "dim": l.dim,
            "nnz": l.nnz(),
            "eigenvalues": s.eigenvalues.len(),
            "distinct_clusters": distinct.len(),
            "max_abs_real_part": s.eigenvalues.iter().map(|z| z.re.abs()).fold(0.0, f64::max),
        });
        s.to_csv()
    };
    let mut verdicts = Vec::new();
    if wants(cfg, "cellular") {
        verdicts.push(acceptance::timed("AC7", acceptance::run_ac7));
    }
    if wants(cfg, "rigid") {
        verdicts.push(acceptance::timed("AC8", acceptance::run_ac8));
    }
    Ok(Output { csv, summary, verdicts })
}

fn sweep_spec(cfg: &RunConfig) -> RResult<SweepSpec> {
    let base = match cfg.get("base") {
        Some("stagnation") => BaseStrategy::Stagnation {
            delta: cfg.f64("delta")?,
        },
        Some("long-orbit") => BaseStrategy::LongOrbit,
        _ => BaseStrategy::Point(cfg.point("x0")?.expect("validated")),
    };
    let m = cfg.i32("m")?;
    if m < 0 {
        return Err(ConfigError::at_key("m", "approx-eig needs m >= 0").into());
    }
    Ok(SweepSpec {
        scenario: cfg.flow_name().to_string(),
        m: m as u32,
        lambda: cfg.f64("lambda")?,
        xis: cfg.f64_list("xi")?,
        ns: cfg.f64_list("N")?,
        ss: cfg.s_list()?,
        variant: cfg.variant()?,
        base,
        mode_box: cfg.usize("M")?,
        route: cfg.route()?,
        chart: ChartResolution::default(),
        max_halvings: cfg.u64("halvings")? as u32,
        relaxed_chart: false,
    })
}

fn same_spec(a: &SweepSpec, b: &SweepSpec) -> bool {
    let strip = |s: &SweepSpec| {
        let mut v = serde_json::to_value(s).unwrap_or(Value::Null);
        if let Some(o) = v.as_object_mut() {
            o.remove("scenario");
        }
        v
    };
    strip(a) == strip(b)
}

fn approx_eig(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let spec = sweep_spec(cfg)?;
    let start = std::time::Instant::now();
    let report = approxeig::sweep(u, &spec);
    let secs = start.elapsed().as_secs_f64();
    let summary = json!({
        "spec": spec,
        "trends": report.trends,
        "all_decreasing": report.all_decreasing(),
        "xi_variation": report.xi_variation,
        "max_xi_variation": report.max_xi_variation(),
        "rows": report.rows,
    });
    let mut verdicts = Vec::new();
    let pinned: Option<(&str, SweepSpec, fn(&approxeig::ResidualReport) -> Verdict)> = if !cfg.bool("acceptance")? {
        None
    } else {
        match cfg.flow_name() {
            "cellular" => Some(("AC10", approxeig::saddle_defaults(), acceptance::check_ac10)),
            "shear" => Some(("AC9", acceptance::ac9_spec(), acceptance::check_ac9)),
            "rigid" => Some(("AC11", acceptance::ac11_spec(), acceptance::check_ac11)),
            _ => None,
        }
    };
    if let Some((id, pspec, check)) = pinned {
        if same_spec(&spec, &pspec) {
            verdicts.push((check(&report), secs));
        } else {
            verdicts.push(acceptance::timed(id, || Ok(check(&approxeig::sweep(u, &pspec)))));
        }
    }
    Ok(Output {
        csv: report.to_csv(),
        summary,
        verdicts,
    })
}

fn semigroup(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let m = cfg.i32("m")?;
    let t = cfg.f64("T")?;
    let center = cfg.pair("seed_center")?;
    let sigma = cfg.f64("seed_sigma")?;
    let sbox = cfg.usize("seed_box")?;
    if !(sigma > 0.0) || sbox == 0 {
        return Err(ConfigError::at_key("seed_sigma", "seed needs sigma > 0 and seed_box > 0").into());
    }
    let seed = operators::gaussian_seed(center, sigma, sbox);
    let opts = GrowthOptions {
        grid: cfg.usize("grid")?,
        method: cfg.method()?,
        exec: cfg.exec(),
        ..GrowthOptions::default()
    };
    let start = std::time::Instant::now();
    let g = operators::semigroup_growth_with(u, m, &seed, t, &opts)?;
    let secs = start.elapsed().as_secs_f64();
    let mut csv = String::from("t,norm\n");
    for (s, n) in &g.samples {
        let _ = writeln!(csv, "{},{}", fmt_float(*s), fmt_float(*n));
    }
    let summary = json!({
        "exponent": g.exponent,
        "method": g.method,
        "sobolev_index": g.sobolev_index,
        "max_tail": g.max_tail,
        "points": g.points,
        "warnings": g.warnings,
    });
    let mut verdicts = Vec::new();
    if wants(cfg, "cellular") {
        let lambda = cellular_lambda();
        let pinned_seed = operators::gaussian_seed([0.2, 0.2], 0.2, 45);
        let reuse = m == 1
            && t == 8.0
            && seed == pinned_seed
            && opts.method.is_none()
            && g.method == operators::GrowthMethod::LagrangianQuadtree;
        let t0 = std::time::Instant::now();
        let v = (|| -> lyapspec_core::Result<Verdict> {
            let growth = if reuse {
                acceptance::Growth {
                    m1: g.clone(),
                    m0: operators::semigroup_growth_with(
                        &presets::cellular(),
                        0,
                        &pinned_seed,
                        8.0,
                        &GrowthOptions::default(),
                    )?,
                }
            } else {
                acceptance::run_growth()?
            };
            Ok(acceptance::check_ac12(&growth, lambda))
        })()
        .unwrap_or_else(|e| Verdict::failed("AC12", &e));
        let extra = if reuse { secs } else { 0.0 };
        verdicts.push((v, t0.elapsed().as_secs_f64() + extra));
    }
    Ok(Output { csv, summary, verdicts })
}

fn orbits_run(cfg: &RunConfig, u: &TrigVelocityField) -> RResult<Output> {
    let scan = orbits::longest_orbit_scan_with(
        cfg.exec(),
        u,
        cfg.f64("target")?,
        cfg.usize("grid")?,
        cfg.f64("horizon")?,
    )?;
    let summary = json!({
        "target": scan.target,
        "bounded": scan.bounded(),
        "witness": scan.witness,
        "longest_finite": scan.longest_finite,
        "long_orbit_predicate": orbits::long_orbit_predicate(u),
    });
    Ok(Output {
        csv: scan.to_csv(),
        summary,
        verdicts: Vec::new(),
    })
}
