//! End-to-end checks of the binary's error contract: exit code 0 only on
//! success, and a machine-readable `{"error":{code,message}}` object on
//! stderr whenever a command fails.

use std::path::Path;

fn run(args: &[&str], dir: &Path) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_paneldid"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Parse the stderr error object, asserting its shape.
fn error_code(output: &std::process::Output) -> String {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr
        .lines()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON object on stderr: {stderr}"));
    let v: serde_json::Value = serde_json::from_str(line)
        .unwrap_or_else(|e| panic!("stderr is not valid JSON ({e}): {line}"));
    assert!(
        v["error"]["message"].is_string(),
        "error object lacks a message: {line}"
    );
    v["error"]["code"]
        .as_str()
        .unwrap_or_else(|| panic!("error object lacks a code: {line}"))
        .to_string()
}

#[test]
fn missing_config_file_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--config", "absent.toml", "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "IO_ERROR");
}

#[test]
fn unknown_config_key_reports_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[data]\npannel = \"x.csv\"\n").unwrap();
    let out = run(&["--config", "bad.toml", "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "SCHEMA_ERROR");
}

#[test]
fn simulate_without_section_reports_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "SCHEMA_ERROR");
}

#[test]
fn unknown_outcome_fails_with_unknown_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("panel.csv"),
        "unit_id,year,treatment_year,y\nu1,1850,1860,1.0\nu1,1860,1860,2.0\n\
         u2,1850,,0.5\nu2,1860,,0.7\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[data]\npanel = \"panel.csv\"\n[outcomes]\nnames = [\"absent\"]\n\
         [controls]\nnone = true\n",
    )
    .unwrap();
    let out = run(&["--config", "run.toml", "estimate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "UNKNOWN_COLUMN");
}

#[test]
fn validate_rejects_non_absorbing_panel_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // u1 claims treatment in 1850 and then recants: validation must fail,
    // and estimation must refuse the same file with the same diagnosis.
    std::fs::write(
        dir.path().join("panel.csv"),
        "unit_id,year,treatment_year,y\nu1,1850,1850,1.0\nu1,1860,,2.0\n\
         u2,1850,,0.5\nu2,1860,,0.7\n",
    )
    .unwrap();
    let out = run(&["validate", "panel.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(
        v["errors"]
            .as_array()
            .is_some_and(|e| e.iter().any(|i| i["code"] == "NON_ABSORBING")),
        "expected a NON_ABSORBING issue, got: {stdout}"
    );

    std::fs::write(
        dir.path().join("run.toml"),
        "[data]\npanel = \"panel.csv\"\n[controls]\nnone = true\n",
    )
    .unwrap();
    let est = run(&["--config", "run.toml", "estimate"], dir.path());
    assert_eq!(est.status.code(), Some(1));
    error_code(&est);
}

#[test]
fn validate_accepts_clean_panel_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("panel.csv"),
        "unit_id,year,treatment_year,y\nu1,1850,1860,1.0\nu1,1860,1860,2.0\n\
         u2,1850,,0.5\nu2,1860,,0.7\n",
    )
    .unwrap();
    let out = run(&["validate", "panel.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["errors"].as_array().map(Vec::len), Some(0));
}

#[test]
fn estimate_without_panel_reports_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["estimate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "SCHEMA_ERROR");
}
