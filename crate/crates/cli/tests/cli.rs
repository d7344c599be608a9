use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_rwn-dirac");

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(dir);
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn csv(dir: &Path, command: &str) -> String {
    fs::read_to_string(dir.join(format!("{command}.csv"))).unwrap()
}

fn envelope(dir: &Path, command: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{command}.envelope.json"))).unwrap()).unwrap()
}

fn field(text: &str, column: &str) -> String {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines.next().unwrap().split(',').nth(idx).unwrap().to_string()
}

#[test]
fn classify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["classify"], Some(r#"{"Z": 1, "A": 1}"#));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&csv(dir.path(), "classify"), "sector"), "naked");

    let out = run(dir.path(), &["classify"], Some(r#"{"Z": 1, "A": "extremal"}"#));
    assert_eq!(out.status.code(), Some(0));
    let text = csv(dir.path(), "classify");
    assert_eq!(field(&text, "sector"), "extremal");
    assert_eq!(field(&text, "r0"), field(&text, "q"));

    let out = run(dir.path(), &["classify"], Some(r#"{"Z": 1, "A": 2e18}"#));
    assert_eq!(out.status.code(), Some(0));
    let text = csv(dir.path(), "classify");
    assert_eq!(field(&text, "sector"), "subextremal");
    let rho: f64 = field(&text, "rho").parse().unwrap();
    assert!((rho - 11.140).abs() < 5e-4, "rho {rho}");
    let env = envelope(dir.path(), "classify");
    assert_eq!(env["summary"]["sector"], "subextremal");
    assert_eq!(env["config"]["A"], 2e18);
}

#[test]
fn envelope_echoes_defaults_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["classify"], None).status.code(), Some(0));
    let env = envelope(dir.path(), "classify");
    assert_eq!(env["command"], "classify");
    for key in ["Z", "A", "k", "fa", "theta", "rescale", "tolerances", "grids"] {
        assert!(!env["config"][key].is_null(), "missing {key}");
    }
    assert!(env["provenance"]["timestamp_unix"].as_u64().unwrap() > 0);
    assert_eq!(env["provenance"]["tolerances"], env["config"]["tolerances"]);
    assert!(env["constants"]["alpha_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn threshold_row() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["threshold"], None).status.code(), Some(0));
    let text = csv(dir.path(), "threshold");
    assert_eq!(text.lines().count(), 2);
    let fa: f64 = field(&text, "fa_crit").parse().unwrap();
    assert!((fa - 1.2793e-18).abs() < 1e-22, "{fa}");
    let bisected: f64 = field(&text, "fa_crit_bisected").parse().unwrap();
    assert!((bisected - fa).abs() < 1e-9 * fa);
}

#[test]
fn weyldemo_reports_unit_slope() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["weyldemo"], None).status.code(), Some(0));
    assert_eq!(csv(dir.path(), "weyldemo").lines().count(), 5);
    let slope = envelope(dir.path(), "weyldemo")["summary"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.1, "{slope}");
}

#[test]
fn eigenscan_finds_no_roots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"A": 2e18, "theta": 0.0, "grids": {"eigenscan": {"min": -0.02, "max": 0.02, "points": 21}}}"#;
    assert_eq!(run(dir.path(), &["eigenscan"], Some(cfg)).status.code(), Some(0));
    assert_eq!(csv(dir.path(), "eigenscan").lines().count(), 22);
    assert_eq!(envelope(dir.path(), "eigenscan")["summary"]["roots_found"], 0);
}

#[test]
fn csv_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in ["coords", "coeffs", "mfunc"] {
        assert_eq!(run(a.path(), &[cmd], None).status.code(), Some(0));
        assert_eq!(run(b.path(), &[cmd], None).status.code(), Some(0));
        assert_eq!(csv(a.path(), cmd).as_bytes(), csv(b.path(), cmd).as_bytes(), "{cmd}");
    }
}

#[test]
fn parallel_matches_serial() {
    let serial = tempfile::tempdir().unwrap();
    let parallel = tempfile::tempdir().unwrap();
    let cfg = r#"{"grids": {"eigenscan": {"min": -0.02, "max": 0.02, "points": 17}}}"#;
    for cmd in ["eigenscan", "weyldemo", "coeffs"] {
        assert_eq!(run(serial.path(), &[cmd, "--jobs", "1"], Some(cfg)).status.code(), Some(0));
        assert_eq!(run(parallel.path(), &[cmd, "--jobs", "4"], Some(cfg)).status.code(), Some(0));
        assert_eq!(csv(serial.path(), cmd), csv(parallel.path(), cmd), "{cmd}");
    }
}

#[test]
fn csv_numbers_have_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["coords"], None).status.code(), Some(0));
    let text = csv(dir.path(), "coords");
    for line in text.lines().skip(1) {
        for cell in line.split(',').filter(|c| c.contains('e')) {
            let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.len(), 18, "{cell}");
        }
    }
}

#[test]
fn json_format_writes_only_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["threshold", "--format", "json"], None).status.code(), Some(0));
    assert!(!dir.path().join("threshold.csv").exists());
    let env = envelope(dir.path(), "threshold");
    assert!(env["rows"][0]["fa_crit"].as_f64().is_some());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [r#"{"A": "heavy"}"#, r#"{"k": 0}"#, r#"{"theta": 3.5}"#, "{", r#"{"bogus": true}"#] {
        let out = run(dir.path(), &["classify"], Some(cfg));
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    // spectral commands need a black hole
    let out = run(dir.path(), &["eigenscan"], Some(r#"{"A": 1}"#));
    assert_eq!(out.status.code(), Some(2));
    let missing = Command::new(BIN)
        .args(["classify", "--config", "/nonexistent/config.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"tolerances": {"max_steps": 20}, "grids": {"eigenscan": {"min": -0.01, "max": 0.01, "points": 3}}}"#;
    let out = run(dir.path(), &["eigenscan"], Some(cfg));
    assert_eq!(out.status.code(), Some(3));
    let text = csv(dir.path(), "eigenscan");
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",failed")));
    let env = envelope(dir.path(), "eigenscan");
    assert_eq!(env["status"], "numerical_failure");
    assert_eq!(env["failures"].as_array().unwrap().len(), 3);
}
