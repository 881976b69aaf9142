//! Black-box tests of the installed binary: exit codes, artifacts, headers.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_renewal-lab");

const REFERENCE: &str = "\
[mortality]
kind = \"constant\"
value = 0.5

[birth_rate]
kind = \"compact\"
pieces = [[1.0, 3.0, 1.0]]
normalize = true

[birth_function]
kind = \"hill\"
a = 3.0
b = 2.0
";

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("model.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, config: &Path, args: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn validate_accepts_the_reference_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), REFERENCE);
    let out = run(dir.path(), &config, &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| !l.starts_with("FAIL")), "{text}");
}

#[test]
fn validate_rejects_a_monostable_birth_function() {
    let dir = tempfile::tempdir().unwrap();
    // a = 2 pins f(x) < x everywhere positive: no interior fixed points
    let config = write_config(dir.path(), &REFERENCE.replace("a = 3.0", "a = 2.0"));
    let out = run(dir.path(), &config, &["validate"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[mortality]\nkind = \"constant\"\n");
    let out = run(dir.path(), &config, &["validate"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), REFERENCE);
    let out = run(dir.path(), &config, &["validate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn simulate_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), REFERENCE);
    let out = run(dir.path(), &config, &["simulate", "--u0", "equilibrium:2", "-T", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,b,B"));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"subcommand\": \"simulate\""));
    assert!(manifest.contains("trajectory.csv"));
}

#[test]
fn density_and_norms_emit_expected_headers() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), REFERENCE);
    let out = run(dir.path(), &config, &["density", "--u0", "step:0,3,2", "--times", "0,5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..2 {
        let csv = std::fs::read_to_string(dir.path().join(format!("density_{i}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("a,u"));
    }

    let out = run(dir.path(), &config, &["norms", "--u0", "step:0,3,2", "-T", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("norms.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,l1,dist0,dist1,dist2"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = write_config(dir_a.path(), REFERENCE);
    for dir in [dir_a.path(), dir_b.path()] {
        let out = run(dir, &config, &["simulate", "--u0", "step:0,3,2", "-T", "15"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trajectory.csv", "manifest.json"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn stability_reports_the_growth_rate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), REFERENCE);
    let out = run(dir.path(), &config, &["stability"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("unstable"));
    assert!(text.contains("lambda_hat = 0.158841915982"), "{text}");
}
