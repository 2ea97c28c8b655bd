use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapspec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn artifact(dir: &Path, prefix: &str, ext: &str) -> PathBuf {
    let mut found: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let n = p.file_name().unwrap().to_string_lossy();
            n.starts_with(prefix) && n.ends_with(ext)
        })
        .collect();
    assert_eq!(found.len(), 1, "{prefix}*{ext} in {dir:?}");
    found.pop().unwrap()
}

fn error_record(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str::<Value>(text.trim()).expect("stderr is one JSON record")["error"].clone()
}

#[test]
fn rigid_spectrum_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["spectrum", "--flow", "rigid", "--M", "4", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ca = artifact(a.path(), "spectrum-", ".csv");
    let cb = artifact(b.path(), "spectrum-", ".csv");
    assert_eq!(ca.file_name(), cb.file_name());
    let text = fs::read(&ca).unwrap();
    assert_eq!(text, fs::read(&cb).unwrap());

    let text = String::from_utf8(text).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("re,im"));
    let mut n = 0;
    for l in lines {
        let (re, im) = l.split_once(',').unwrap();
        let (re, im): (f64, f64) = (re.parse().unwrap(), im.parse().unwrap());
        assert!(re.abs() < 1e-10);
        assert!((im - im.round()).abs() < 1e-10 && im.abs() <= 4.0 + 1e-10);
        n += 1;
    }
    assert_eq!(n, 80);

    let js: Value = serde_json::from_str(&fs::read_to_string(artifact(a.path(), "spectrum-", ".json")).unwrap()).unwrap();
    assert_eq!(js["config"]["M"], "4");
    assert_eq!(js["verdicts"][0]["id"], "AC8");
    assert_eq!(js["verdicts"][0]["pass"], true);
    assert!(js["versions"]["lyapspec-core"].is_string());
    assert!(js["wall_clock_seconds"].is_number());
}

#[test]
fn cellular_flow_info_lists_eight_points() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["flow-info", "--acceptance", "false", "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success());
    let js: Value = serde_json::from_str(&fs::read_to_string(artifact(d.path(), "flow-info-", ".json")).unwrap()).unwrap();
    let pts = js["summary"]["stagnation_points"].as_array().unwrap();
    assert_eq!(pts.len(), 8);
    let kinds: Vec<&str> = pts.iter().map(|p| p["kind"]["type"].as_str().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "hyperbolic").count(), 4);
    assert_eq!(kinds.iter().filter(|k| **k == "center").count(), 4);
    assert_eq!(js["verdicts"].as_array().unwrap().len(), 0);
    assert_eq!(js["summary"]["long_orbit_predicate"]["holds"], true);
}

#[test]
fn trajectory_dump_with_inline_flow() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(
        &cfg,
        "# pure shear in x1\nflow = inline\nstream = 0,1,0.5,0; 0,-1,0.5,0\nx0 = 0.3, 0.4\nT = 1\n",
    )
    .unwrap();
    let o = run(&["flow-info", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(artifact(d.path(), "flow-info-", ".csv")).unwrap();
    assert!(text.starts_with("t,x1,x2,m11,m12,m21,m22,det\n"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 1.0).abs() < 1e-12);
    assert!((last[7] - 1.0).abs() < 1e-10);
    // psi = cos x2 moves points along x1 with speed |sin x2|.
    assert!((last[1] - (0.3 + 0.4f64.sin())).abs() < 1e-9 || (last[1] - (0.3 - 0.4f64.sin())).abs() < 1e-9);
}

#[test]
fn validation_errors_are_records() {
    let o = run(&["spectrum", "--T", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_record(&o);
    assert_eq!(e["kind"], "validation");
    assert_eq!(e["key"], "T");

    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    fs::write(&cfg, "scenario = spectrum\ncolour = blue\n").unwrap();
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["key"], "colour");

    let o = run(&["approx-eig", "--s", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["key"], "s");
    assert!(fs::read_dir(d.path()).unwrap().count() == 1);
}

#[test]
fn computational_failure_exits_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["lyapunov", "--grid", "8", "--acceptance", "false", "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["kind"], "computation");
}

#[test]
fn report_lists_missing_and_detects_corruption() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().to_str().unwrap();
    assert!(run(&["spectrum", "--flow", "rigid", "--M", "4", "--out", dir]).status.success());
    let o = run(&["report", "--out", dir]);
    assert_eq!(o.status.code(), Some(3));
    let e = error_record(&o);
    assert_eq!(e["missing"].as_array().unwrap().len(), 12);
    let rep: Value = serde_json::from_str(&fs::read_to_string(artifact(d.path(), "report-", ".json")).unwrap()).unwrap();
    let matrix = rep["matrix"].as_array().unwrap();
    assert_eq!(matrix.len(), 13);
    assert_eq!(matrix[7]["id"], "AC8");
    assert_eq!(matrix[7]["status"], "pass");
    assert_eq!(matrix[0]["status"], "missing");

    let csv = artifact(d.path(), "spectrum-", ".csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("1,1\n");
    fs::write(&csv, text).unwrap();
    let o = run(&["report", "--out", dir]);
    assert_eq!(o.status.code(), Some(4));
    let e = error_record(&o);
    assert_eq!(e["kind"], "checksum");
    assert_eq!(e["files"][0], csv.file_name().unwrap().to_str().unwrap());
}

#[test]
fn cellular_approx_eig_defaults_decrease() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["approx-eig", "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(artifact(d.path(), "approx-eig-", ".csv")).unwrap();
    assert!(text.starts_with("scenario,m,lambda,xi,N,s,residual,predicted,kg_norm,tail,inj\n"));
    assert_eq!(text.lines().count(), 10);
    let js: Value = serde_json::from_str(&fs::read_to_string(artifact(d.path(), "approx-eig-", ".json")).unwrap()).unwrap();
    assert_eq!(js["summary"]["all_decreasing"], true);
    assert_eq!(js["verdicts"][0]["id"], "AC10");
    assert_eq!(js["verdicts"][0]["pass"], true);
}
