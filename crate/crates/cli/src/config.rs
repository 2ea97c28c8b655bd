//! Flat `key = value` run configuration.
//!
//! A config file holds one assignment per line; `#` starts a comment. Command
//! line flags use the same key names and override the file. Each scenario
//! accepts a fixed set of keys; anything else is rejected before any
//! computation starts. Missing keys take the scenario defaults, and the
//! resolved text (minus `out`) is what gets hashed into artifact names.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use lyapspec_core::approxeig::{BetaVariant, Route};
use lyapspec_core::fields::{self, presets};
use lyapspec_core::operators::GrowthMethod;
use lyapspec_core::par::Exec;
use lyapspec_core::{TorusPoint, TrigVelocityField};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    FlowInfo,
    Lyapunov,
    Bas,
    Spectrum,
    ApproxEig,
    SemigroupGrowth,
    Orbits,
    Report,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::FlowInfo => "flow-info",
            Scenario::Lyapunov => "lyapunov",
            Scenario::Bas => "bas",
            Scenario::Spectrum => "spectrum",
            Scenario::ApproxEig => "approx-eig",
            Scenario::SemigroupGrowth => "semigroup-growth",
            Scenario::Orbits => "orbits",
            Scenario::Report => "report",
        }
    }

    /// Accepted keys with their defaults; `None` means optional with no
    /// default. Some defaults depend on the flow.
    fn schema(self, flow: &str) -> Vec<(&'static str, Option<String>)> {
        let d = |s: &str| Some(s.to_string());
        let mut keys: Vec<(&'static str, Option<String>)> = vec![
            ("scenario", d(self.name())),
            ("out", d(".")),
        ];
        if self == Scenario::Report {
            return keys;
        }
        keys.extend([
            ("flow", d("cellular")),
            ("stream", None),
            ("mean", None),
            ("acceptance", d("true")),
            ("parallel", d("false")),
        ]);
        match self {
            Scenario::FlowInfo => keys.extend([("x0", None), ("T", d("10"))]),
            Scenario::Lyapunov => keys.extend([("T", d("30")), ("grid", d("64")), ("m", d("1"))]),
            Scenario::Bas => keys.extend([
                ("T", d("30")),
                ("samples", d("42")),
                ("seed", d("7")),
                ("m", d("0")),
                ("x0", None),
                ("angle", d("0")),
            ]),
            Scenario::Spectrum => keys.extend([("M", d("6")), ("m", d("0")), ("output", d("spectrum"))]),
            Scenario::ApproxEig => {
                let cellular = flow == "cellular";
                let xi = match flow {
                    "cellular" => "0,0.7,2",
                    "rigid" => "0.5",
                    _ => "0.37",
                };
                keys.extend([
                    ("m", d(if cellular { "1" } else { "0" })),
                    ("lambda", d(if cellular { "1" } else { "0" })),
                    ("xi", d(xi)),
                    ("N", d(if cellular { "4,6,8" } else { "5,10,20" })),
                    ("s", d(if cellular { "auto" } else { "0.02" })),
                    ("variant", d(if cellular { "tent" } else { "indicator" })),
                    ("base", d(if cellular { "stagnation" } else { "long-orbit" })),
                    ("delta", d("0.05")),
                    ("x0", None),
                    ("route", d("auto")),
                    ("M", d("48")),
                    ("halvings", d(if cellular { "0" } else { "12" })),
                ])
            }
            Scenario::SemigroupGrowth => keys.extend([
                ("m", d("1")),
                ("T", d("8")),
                ("seed_center", d("0.2,0.2")),
                ("seed_sigma", d("0.2")),
                ("seed_box", d("45")),
                ("method", d("auto")),
                ("grid", d("128")),
            ]),
            Scenario::Orbits => keys.extend([("target", d("50")), ("grid", d("16")), ("horizon", d("200"))]),
            Scenario::Report => unreachable!(),
        }
        keys
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rejected configuration, reported as a machine-readable record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn at_key(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{k}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

type CResult<T> = Result<T, ConfigError>;

/// Parse `key = value` lines.
pub fn parse_text(text: &str) -> CResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError {
                key: None,
                message: format!("line {}: expected key = value", i + 1),
            });
        };
        let k = k.trim();
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(ConfigError::at_key(k, format!("line {}: duplicate key", i + 1)));
        }
    }
    Ok(out)
}

/// Resolved configuration: every accepted key of the scenario that has a
/// value, after defaults.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: Scenario,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Merge `file` with `flags` (flags win), reject unknown keys, apply
    /// defaults and check every typed value.
    pub fn resolve(
        scenario: Scenario,
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
    ) -> CResult<RunConfig> {
        let mut given = file;
        given.extend(flags);
        if let Some(s) = given.get("scenario") {
            if s != scenario.name() {
                return Err(ConfigError::at_key(
                    "scenario",
                    format!("config is for '{s}' but the subcommand is '{scenario}'"),
                ));
            }
        }
        let flow = given.get("flow").cloned().unwrap_or_else(|| "cellular".into());
        let schema = scenario.schema(&flow);
        for k in given.keys() {
            if !schema.iter().any(|(name, _)| name == k) {
                return Err(ConfigError::at_key(k, format!("unknown key for scenario '{scenario}'")));
            }
        }
        let mut values = BTreeMap::new();
        for (k, default) in schema {
            if let Some(v) = given.remove(k).or(default) {
                values.insert(k.to_string(), v);
            }
        }
        let cfg = RunConfig { scenario, values };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CResult<()> {
        for k in self.values.keys() {
            match k.as_str() {
                "T" | "lambda" | "delta" | "angle" | "seed_sigma" | "target" | "horizon" => {
                    self.f64(k)?;
                }
                "grid" | "M" | "samples" | "seed_box" => {
                    self.usize(k)?;
                }
                "m" => {
                    self.i32("m")?;
                }
                "seed" | "halvings" => {
                    self.u64(k)?;
                }
                "acceptance" | "parallel" => {
                    self.bool(k)?;
                }
                "xi" | "N" => {
                    self.f64_list(k)?;
                }
                "s" => {
                    self.s_list()?;
                }
                "x0" | "mean" | "seed_center" => {
                    self.pair(k)?;
                }
                "variant" => {
                    self.variant()?;
                }
                "route" => {
                    self.route()?;
                }
                "method" => {
                    self.method()?;
                }
                _ => {}
            }
        }
        if self.scenario != Scenario::Report {
            self.flow()?;
        }
        if let Some(b) = self.get("base") {
            match b {
                "stagnation" | "long-orbit" => {}
                "point" if self.get("x0").is_some() => {}
                "point" => return Err(ConfigError::at_key("x0", "base = point needs x0")),
                _ => return Err(ConfigError::at_key("base", "expected stagnation, long-orbit or point")),
            }
        }
        if let Some(o) = self.get("output") {
            if o != "spectrum" && o != "operator" {
                return Err(ConfigError::at_key("output", "expected spectrum or operator"));
            }
        }
        if let Some(t) = self.opt_f64("T")? {
            if !(t > 0.0) {
                return Err(ConfigError::at_key("T", "must be positive"));
            }
        }
        if self.scenario == Scenario::Spectrum && self.usize("M")? > lyapspec_core::operators::DENSE_CEILING {
            return Err(ConfigError::at_key(
                "M",
                format!("dense eigen-solves are capped at M = {}", lyapspec_core::operators::DENSE_CEILING),
            ));
        }
        Ok(())
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.values.get(k).map(String::as_str)
    }

    fn req(&self, k: &str) -> CResult<&str> {
        self.get(k).ok_or_else(|| ConfigError::at_key(k, "missing"))
    }

    fn num<T: std::str::FromStr>(&self, k: &str, what: &str) -> CResult<T> {
        let v = self.req(k)?;
        v.parse().map_err(|_| ConfigError::at_key(k, format!("expected {what}, got '{v}'")))
    }

    pub fn f64(&self, k: &str) -> CResult<f64> {
        let v: f64 = self.num(k, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::at_key(k, "must be finite"))
        }
    }

    pub fn opt_f64(&self, k: &str) -> CResult<Option<f64>> {
        self.get(k).map(|_| self.f64(k)).transpose()
    }

    pub fn usize(&self, k: &str) -> CResult<usize> {
        self.num(k, "a non-negative integer")
    }

    pub fn u64(&self, k: &str) -> CResult<u64> {
        self.num(k, "a non-negative integer")
    }

    pub fn i32(&self, k: &str) -> CResult<i32> {
        self.num(k, "an integer")
    }

    pub fn bool(&self, k: &str) -> CResult<bool> {
        self.num(k, "true or false")
    }

    pub fn f64_list(&self, k: &str) -> CResult<Vec<f64>> {
        self.req(k)?
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ConfigError::at_key(k, format!("bad list entry '{}'", p.trim())))
            })
            .collect()
    }

    /// Half-widths; `auto` picks the default rule.
    pub fn s_list(&self) -> CResult<Vec<Option<f64>>> {
        self.req("s")?
            .split(',')
            .map(|p| match p.trim() {
                "auto" => Ok(None),
                t => t
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && *v < 1.0)
                    .map(Some)
                    .ok_or_else(|| ConfigError::at_key("s", format!("expected 'auto' or a value in (0, 1), got '{t}'"))),
            })
            .collect()
    }

    pub fn pair(&self, k: &str) -> CResult<[f64; 2]> {
        let v = self.f64_list(k)?;
        match v[..] {
            [a, b] => Ok([a, b]),
            _ => Err(ConfigError::at_key(k, "expected two comma-separated numbers")),
        }
    }

    pub fn point(&self, k: &str) -> CResult<Option<TorusPoint>> {
        self.get(k).map(|_| self.pair(k).map(TorusPoint::from_array)).transpose()
    }

    pub fn variant(&self) -> CResult<BetaVariant> {
        BetaVariant::parse(self.req("variant")?).map_err(|e| ConfigError::at_key("variant", e.to_string()))
    }

    pub fn route(&self) -> CResult<Route> {
        Route::parse(self.req("route")?).map_err(|e| ConfigError::at_key("route", e.to_string()))
    }

    pub fn method(&self) -> CResult<Option<GrowthMethod>> {
        match self.req("method")? {
            "auto" => Ok(None),
            "eulerian" => Ok(Some(GrowthMethod::EulerianQuadrature)),
            "lagrangian" => Ok(Some(GrowthMethod::LagrangianQuadtree)),
            "spectral" => Ok(Some(GrowthMethod::SpectralPushforward)),
            o => Err(ConfigError::at_key("method", format!("unknown method '{o}'"))),
        }
    }

    pub fn exec(&self) -> Exec {
        if self.bool("parallel").unwrap_or(false) {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or("."))
    }

    /// Preset name, or `inline` with `stream = k1,k2,re,im; ...` holding the
    /// stream-function coefficients and an optional `mean = u1,u2`.
    pub fn flow(&self) -> CResult<TrigVelocityField> {
        let name = self.req("flow")?;
        let inline = self.get("stream").is_some() || self.get("mean").is_some();
        if name != "inline" {
            if inline {
                return Err(ConfigError::at_key("stream", "only allowed with flow = inline"));
            }
            return presets::by_name(name).ok_or_else(|| {
                ConfigError::at_key(
                    "flow",
                    format!("unknown flow '{name}'; expected one of {:?} or inline", presets::NAMES),
                )
            });
        }
        let stream = self.req("stream")?;
        let mut text = String::from(fields::FIELD_HEADER);
        for rec in stream.split(';') {
            text.push('\n');
            text.push_str(rec.trim());
        }
        let psi = fields::parse_field(&text).map_err(|e| ConfigError::at_key("stream", e.to_string()))?;
        if !psi.is_real(1e-12) {
            return Err(ConfigError::at_key("stream", "coefficients must be conjugate-symmetric"));
        }
        let mean = match self.get("mean") {
            Some(_) => self.pair("mean")?,
            None => [0.0, 0.0],
        };
        TrigVelocityField::new(mean, psi.nonzero()).map_err(|e| ConfigError::at_key("stream", e.to_string()))
    }

    /// Flow name used in artifact names and acceptance routing.
    pub fn flow_name(&self) -> &str {
        self.get("flow").unwrap_or("")
    }

    /// `key = value` lines in key order.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    /// SHA-256 of the resolved text without the output directory.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if k != "out" {
                h.update(format!("{k}={v}\n"));
            }
        }
        format!("{:x}", h.finalize())
    }

    /// `<scenario>-<first 12 hex digits of the hash>`.
    pub fn stem(&self) -> String {
        format!("{}-{}", self.scenario, &self.hash()[..12])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parse_text_examples() {
        let m = parse_text("# run\nflow = shear  # preset\n\nM=4\n").unwrap();
        assert_eq!(m, kv(&[("flow", "shear"), ("M", "4")]));
        assert!(parse_text("flow shear").is_err());
        assert_eq!(parse_text("M=1\nM=2").unwrap_err().key.as_deref(), Some("M"));
    }

    #[test]
    fn defaults_flags_and_unknown_keys() {
        let c = RunConfig::resolve(Scenario::Spectrum, kv(&[("M", "3")]), kv(&[("M", "4")])).unwrap();
        assert_eq!(c.usize("M").unwrap(), 4);
        assert_eq!(c.get("flow"), Some("cellular"));
        let e = RunConfig::resolve(Scenario::Spectrum, kv(&[("T", "3")]), BTreeMap::new()).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("T"));
        let e = RunConfig::resolve(Scenario::Spectrum, kv(&[("M", "40")]), BTreeMap::new()).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("M"));
        let e = RunConfig::resolve(Scenario::Lyapunov, kv(&[("scenario", "bas")]), BTreeMap::new()).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("scenario"));
    }

    #[test]
    fn hash_ignores_out_and_explicit_defaults() {
        let a = RunConfig::resolve(Scenario::Spectrum, kv(&[("out", "a")]), BTreeMap::new()).unwrap();
        let b = RunConfig::resolve(Scenario::Spectrum, kv(&[("flow", "cellular"), ("out", "b")]), BTreeMap::new()).unwrap();
        let c = RunConfig::resolve(Scenario::Spectrum, kv(&[("M", "5")]), BTreeMap::new()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert!(a.stem().starts_with("spectrum-"));
        assert_eq!(a.stem().len(), "spectrum-".len() + 12);
    }

    #[test]
    fn flow_defaults_depend_on_preset() {
        let c = RunConfig::resolve(Scenario::ApproxEig, kv(&[("flow", "shear")]), BTreeMap::new()).unwrap();
        assert_eq!(c.f64_list("N").unwrap(), vec![5.0, 10.0, 20.0]);
        assert_eq!(c.s_list().unwrap(), vec![Some(0.02)]);
        let c = RunConfig::resolve(Scenario::ApproxEig, BTreeMap::new(), BTreeMap::new()).unwrap();
        assert_eq!(c.s_list().unwrap(), vec![None]);
    }

    #[test]
    fn inline_flow() {
        let c = RunConfig::resolve(
            Scenario::FlowInfo,
            kv(&[("flow", "inline"), ("stream", "1,0,0.5,0; -1,0,0.5,0"), ("mean", "0.1,0")]),
            BTreeMap::new(),
        )
        .unwrap();
        let u = c.flow().unwrap();
        let v = u.velocity(&[0.0, 0.0]);
        assert!((v[0] - 0.1).abs() < 1e-15);
        let bad = RunConfig::resolve(
            Scenario::FlowInfo,
            kv(&[("flow", "inline"), ("stream", "1,0,0.5,0")]),
            BTreeMap::new(),
        );
        assert_eq!(bad.unwrap_err().key.as_deref(), Some("stream"));
        let bad = RunConfig::resolve(Scenario::FlowInfo, kv(&[("stream", "1,0,1,0")]), BTreeMap::new());
        assert!(bad.is_err());
    }
}
