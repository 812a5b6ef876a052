use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use usability_core::pipeline::PipelineConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_usability"))
}

fn bundled_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.json")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let config = bundled_config_path();
    bin()
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("spawning the binary")
}

#[test]
fn bundled_config_file_matches_builtin() {
    let text = std::fs::read_to_string(bundled_config_path()).unwrap();
    let parsed = PipelineConfig::from_json(&text).unwrap();
    assert_eq!(parsed, PipelineConfig::bundled());
}

#[test]
fn run_emits_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "report.json",
        "report.csv",
        "scores.csv",
        "selection.json",
        "confusion.csv",
        "metrics.json",
        "comparison.csv",
        "trace.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Efficiency"), "stdout: {stdout}");
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), &["run"]).status.success());
    assert!(run_in(b.path(), &["run"]).status.success());
    for name in ["report.json", "confusion.csv", "trace.csv"] {
        let left = std::fs::read(a.path().join(name)).unwrap();
        let right = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs");
    }
}

#[test]
fn seed_override_changes_the_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), &["run"]).status.success());
    assert!(run_in(b.path(), &["run", "--seed", "8"]).status.success());
    let left = std::fs::read(a.path().join("report.json")).unwrap();
    let right = std::fs::read(b.path().join("report.json")).unwrap();
    assert_ne!(left, right);
}

#[test]
fn score_prints_and_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["score"]);
    assert!(out.status.success());
    assert!(dir.path().join("scores.csv").is_file());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("feature,score"), "stdout: {stdout}");
}

#[test]
fn select_writes_mask_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["select"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("selection.json").is_file());
    assert!(dir.path().join("trace.csv").is_file());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin().args(["run", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ingest"));
    assert!(stdout.contains("report"));
}

#[test]
fn unreadable_config_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config", "/nonexistent/config.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_file_reports_the_ingest_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "seed": 1,
            "dataset": {
                "kind": "csv",
                "path": "/nonexistent/survey.csv",
                "schema": {"q1": "Efficiency"}
            }
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest"), "stderr: {stderr}");
}

#[test]
fn synth_rejects_csv_dataset_specs() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "seed": 1,
            "dataset": {
                "kind": "csv",
                "path": "/tmp/whatever.csv",
                "schema": {"q1": "Efficiency"}
            }
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["synth", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let survey = dir.path().join("survey.csv");
    std::fs::write(
        &survey,
        "id,department,q1,q2\nr1,cs,4,5\nr2,ee,2,3\nr3,cs,5,1\n",
    )
    .unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{
                "seed": 1,
                "dataset": {{
                    "kind": "csv",
                    "path": {:?},
                    "schema": {{"q1": "Efficiency", "q2": "Learnability"}}
                }}
            }}"#,
            survey
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["ingest", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("survey.csv").is_file());
    assert!(out_dir.join("polarity.csv").is_file());
    let polarity = std::fs::read_to_string(out_dir.join("polarity.csv")).unwrap();
    assert!(polarity.starts_with("feature,"), "{polarity}");
}
