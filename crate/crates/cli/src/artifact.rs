//! Artifact files and the consolidated report.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use lyapspec_core::acceptance::{Verdict, IDS};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::scenarios::Output;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn versions() -> Value {
    json!({
        "lyapspec-core": lyapspec_core::VERSION,
        "lyapspec-cli": env!("CARGO_PKG_VERSION"),
        "parallel-feature": cfg!(feature = "parallel"),
    })
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn verdict_json(v: &Verdict, secs: f64) -> Value {
    let mut o = serde_json::to_value(v).unwrap_or(Value::Null);
    o["seconds"] = json!(secs);
    o
}

/// Write `<stem>.csv` and `<stem>.json` into the output directory.
pub fn write_run(cfg: &RunConfig, out: &Output, wall: f64) -> io::Result<(PathBuf, PathBuf)> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    let stem = cfg.stem();
    let csv_name = format!("{stem}.csv");
    let csv_path = dir.join(&csv_name);
    fs::write(&csv_path, &out.csv)?;
    let doc = json!({
        "scenario": cfg.scenario.name(),
        "config": cfg.echo(),
        "config_sha256": cfg.hash(),
        "versions": versions(),
        "finished_unix": unix_seconds(),
        "wall_clock_seconds": wall,
        "csv": { "file": csv_name, "sha256": sha256_hex(out.csv.as_bytes()) },
        "summary": out.summary,
        "verdicts": out.verdicts.iter().map(|(v, s)| verdict_json(v, *s)).collect::<Vec<_>>(),
    });
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok((csv_path, json_path))
}

#[derive(Debug, Serialize)]
pub struct Source {
    pub artifact: String,
    pub pass: bool,
    pub measured: String,
    pub threshold: String,
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Row {
    pub id: &'static str,
    /// `pass`, `fail` or `missing`.
    pub status: &'static str,
    pub sources: Vec<Source>,
}

#[derive(Debug)]
pub enum ReportError {
    Io(String),
    /// Artifacts whose CSV is absent or does not match the recorded digest.
    Checksum(Vec<String>),
}

impl From<io::Error> for ReportError {
    fn from(e: io::Error) -> Self {
        ReportError::Io(e.to_string())
    }
}

pub struct Report {
    pub rows: Vec<Row>,
    pub artifacts: Vec<String>,
    pub path: PathBuf,
}

impl Report {
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| r.status == "pass")
    }
}

/// Aggregate the verdicts of every run artifact in the directory.
pub fn build_report(cfg: &RunConfig) -> Result<Report, ReportError> {
    let dir = cfg.out_dir();
    let mut names: Vec<String> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && !n.starts_with("report-"))
        .collect();
    names.sort();
    let mut bad = Vec::new();
    let mut sources: Vec<Vec<Source>> = IDS.iter().map(|_| Vec::new()).collect();
    let mut artifacts = Vec::new();
    for name in names {
        let text = fs::read_to_string(dir.join(&name))?;
        let Ok(doc) = serde_json::from_str::<Value>(&text) else {
            continue;
        };
        let (Some(csv), Some(digest)) = (doc["csv"]["file"].as_str(), doc["csv"]["sha256"].as_str()) else {
            continue;
        };
        if !check_csv(&dir, csv, digest) {
            bad.push(csv.to_string());
            continue;
        }
        artifacts.push(name.clone());
        for v in doc["verdicts"].as_array().into_iter().flatten() {
            let Ok(v) = serde_json::from_value::<Verdict>(strip_seconds(v)) else {
                continue;
            };
            if let Some(i) = IDS.iter().position(|id| *id == v.id) {
                sources[i].push(Source {
                    artifact: name.clone(),
                    pass: v.pass,
                    measured: v.measured,
                    threshold: v.threshold,
                    note: v.note,
                });
            }
        }
    }
    if !bad.is_empty() {
        return Err(ReportError::Checksum(bad));
    }
    let rows: Vec<Row> = IDS
        .iter()
        .zip(sources)
        .map(|(id, s)| Row {
            id,
            status: if s.is_empty() {
                "missing"
            } else if s.iter().all(|x| x.pass) {
                "pass"
            } else {
                "fail"
            },
            sources: s,
        })
        .collect();
    let missing: Vec<&str> = rows.iter().filter(|r| r.status == "missing").map(|r| r.id).collect();
    let doc = json!({
        "scenario": "report",
        "config": cfg.echo(),
        "versions": versions(),
        "finished_unix": unix_seconds(),
        "artifacts": artifacts,
        "missing": missing,
        "passed": rows.iter().filter(|r| r.status == "pass").count(),
        "failed": rows.iter().filter(|r| r.status == "fail").count(),
        "matrix": rows,
    });
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.json", cfg.stem()));
    fs::write(&path, serde_json::to_string_pretty(&doc).map_err(io::Error::from)? + "\n")?;
    Ok(Report { rows, artifacts, path })
}

fn strip_seconds(v: &Value) -> Value {
    let mut v = v.clone();
    if let Some(o) = v.as_object_mut() {
        o.remove("seconds");
    }
    v
}

fn check_csv(dir: &Path, file: &str, digest: &str) -> bool {
    // Artifact names never contain separators; anything else is treated as corrupt.
    if file.contains('/') || file.contains('\\') {
        return false;
    }
    fs::read(dir.join(file)).map(|b| sha256_hex(&b) == digest).unwrap_or(false)
}
