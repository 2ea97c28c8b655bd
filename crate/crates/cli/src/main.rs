//! `lyapspec`: run one scenario per invocation and write
//! `<scenario>-<config hash>.csv/json`, or aggregate earlier runs with
//! `report`.
//!
//! Exit codes: 0 success, 1 computational or I/O failure, 2 invalid
//! configuration, 3 report with missing or failing criteria, 4 checksum
//! mismatch. Failures print one JSON error record on stderr.

mod artifact;
mod config;
mod scenarios;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, RunConfig, Scenario};
use scenarios::RunError;

#[derive(Parser)]
#[command(name = "lyapspec", version, about = "Spectral experiments for the linearized 2D Euler equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stagnation points, long-orbit predicate, optional trajectory dump.
    FlowInfo(RunArgs),
    /// Global Lyapunov exponent on a grid (and D²φ growth with m = 2).
    Lyapunov(RunArgs),
    /// Bicharacteristic amplitude system exponent and a trajectory dump.
    Bas(RunArgs),
    /// Galerkin spectrum of L, or the operator triplets.
    Spectrum(RunArgs),
    /// Approximate-eigenfunction residual sweep.
    ApproxEig(RunArgs),
    /// Growth rate of the transported seed in H_m.
    SemigroupGrowth(RunArgs),
    /// Longest-orbit scan.
    Orbits(RunArgs),
    /// Pass/fail matrix over all artifacts in the output directory.
    Report(RunArgs),
}

/// Flags carry the config key names and override the config file.
#[derive(Args, Default)]
struct RunArgs {
    /// File with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<String>,
    /// Preset (rigid, shear, cellular) or `inline`.
    #[arg(long)]
    flow: Option<String>,
    /// Inline stream coefficients `k1,k2,re,im; ...`.
    #[arg(long, allow_hyphen_values = true)]
    stream: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mean: Option<String>,
    #[arg(long)]
    acceptance: Option<String>,
    #[arg(long)]
    parallel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long = "T", id = "T")]
    horizon_t: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "m", id = "m", allow_hyphen_values = true)]
    sobolev: Option<String>,
    #[arg(long = "M", id = "M")]
    mode_box: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    angle: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
    #[arg(long = "N", id = "N")]
    ns: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    halvings: Option<String>,
    #[arg(long = "seed_center", allow_hyphen_values = true)]
    seed_center: Option<String>,
    #[arg(long = "seed_sigma")]
    seed_sigma: Option<String>,
    #[arg(long = "seed_box")]
    seed_box: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("out", &self.out),
            ("flow", &self.flow),
            ("stream", &self.stream),
            ("mean", &self.mean),
            ("acceptance", &self.acceptance),
            ("parallel", &self.parallel),
            ("x0", &self.x0),
            ("T", &self.horizon_t),
            ("grid", &self.grid),
            ("m", &self.sobolev),
            ("M", &self.mode_box),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("angle", &self.angle),
            ("output", &self.output),
            ("lambda", &self.lambda),
            ("xi", &self.xi),
            ("N", &self.ns),
            ("s", &self.s),
            ("variant", &self.variant),
            ("base", &self.base),
            ("delta", &self.delta),
            ("route", &self.route),
            ("halvings", &self.halvings),
            ("seed_center", &self.seed_center),
            ("seed_sigma", &self.seed_sigma),
            ("seed_box", &self.seed_box),
            ("method", &self.method),
            ("target", &self.target),
            ("horizon", &self.horizon),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

const EXIT_COMPUTE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;
const EXIT_CHECKSUM: u8 = 4;

fn fail(code: u8, kind: &str, body: serde_json::Value) -> ExitCode {
    let mut rec = json!({ "kind": kind });
    if let (Some(r), Some(b)) = (rec.as_object_mut(), body.as_object()) {
        r.extend(b.clone());
    }
    eprintln!("{}", json!({ "error": rec }));
    ExitCode::from(code)
}

fn config_fail(e: &ConfigError) -> ExitCode {
    fail(EXIT_CONFIG, "validation", json!({ "key": e.key, "message": e.message }))
}

fn load(scenario: Scenario, args: &RunArgs) -> Result<RunConfig, ConfigError> {
    let file = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                key: None,
                message: format!("cannot read {}: {e}", p.display()),
            })?;
            config::parse_text(&text)?
        }
        None => BTreeMap::new(),
    };
    RunConfig::resolve(scenario, file, args.flags())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return fail(EXIT_CONFIG, "usage", json!({ "message": e.to_string().trim() }));
        }
    };
    let (scenario, args) = match cli.cmd {
        Cmd::FlowInfo(a) => (Scenario::FlowInfo, a),
        Cmd::Lyapunov(a) => (Scenario::Lyapunov, a),
        Cmd::Bas(a) => (Scenario::Bas, a),
        Cmd::Spectrum(a) => (Scenario::Spectrum, a),
        Cmd::ApproxEig(a) => (Scenario::ApproxEig, a),
        Cmd::SemigroupGrowth(a) => (Scenario::SemigroupGrowth, a),
        Cmd::Orbits(a) => (Scenario::Orbits, a),
        Cmd::Report(a) => (Scenario::Report, a),
    };
    let cfg = match load(scenario, &args) {
        Ok(c) => c,
        Err(e) => return config_fail(&e),
    };
    if scenario == Scenario::Report {
        return report(&cfg);
    }
    let start = Instant::now();
    let out = match scenarios::run(&cfg) {
        Ok(o) => o,
        Err(RunError::Config(e)) => return config_fail(&e),
        Err(RunError::Compute(e)) => {
            return fail(
                EXIT_COMPUTE,
                "computation",
                json!({ "scenario": scenario.name(), "message": e.to_string(), "detail": format!("{e:?}") }),
            )
        }
    };
    match artifact::write_run(&cfg, &out, start.elapsed().as_secs_f64()) {
        Ok((csv, js)) => {
            println!("{}", csv.display());
            println!("{}", js.display());
            for (v, secs) in &out.verdicts {
                println!("{}  [{secs:.1}s]", v.line());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_COMPUTE, "io", json!({ "message": e.to_string() })),
    }
}

fn report(cfg: &RunConfig) -> ExitCode {
    match artifact::build_report(cfg) {
        Ok(r) => {
            for row in &r.rows {
                let detail = row.sources.first().map(|s| s.measured.as_str()).unwrap_or("");
                println!("{:<4} {:<7} {detail}", row.id, row.status);
            }
            println!("{}", r.path.display());
            if r.complete() {
                ExitCode::SUCCESS
            } else {
                let missing: Vec<&str> = r.rows.iter().filter(|x| x.status == "missing").map(|x| x.id).collect();
                let failed: Vec<&str> = r.rows.iter().filter(|x| x.status == "fail").map(|x| x.id).collect();
                fail(
                    EXIT_INCOMPLETE,
                    "report",
                    json!({ "missing": missing, "failed": failed, "artifacts": r.artifacts.len() }),
                )
            }
        }
        Err(artifact::ReportError::Checksum(files)) => fail(
            EXIT_CHECKSUM,
            "checksum",
            json!({ "message": "CSV artifacts do not match their recorded sha256", "files": files }),
        ),
        Err(artifact::ReportError::Io(m)) => fail(EXIT_COMPUTE, "io", json!({ "message": m })),
    }
}
