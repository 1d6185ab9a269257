use std::path::{Path, PathBuf};

use leafavg_core::runner::{run, selftest, RunConfig, RunError, Task};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(rel: &str) -> RunConfig {
    RunConfig::load(&configs().join(rel)).unwrap()
}

#[test]
fn generators_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&load("b3.toml"), Some(dir.path()), None).unwrap();
    assert!(o.passed, "{}", o.summary);
    assert_eq!(o.exit_code(), 0);
    let text = std::fs::read_to_string(dir.path().join("generators.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let degrees: Vec<u64> = json["generators"].as_array().unwrap().iter().map(|g| g["degree"].as_u64().unwrap()).collect();
    assert_eq!(degrees, [2, 4, 6]);
    assert!(dir.path().join("generators_report.json").is_file());
}

#[test]
fn corrupted_generator_file_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&load("negative/verify_corrupted.toml"), Some(dir.path()), None).unwrap();
    assert!(!o.passed);
    assert_eq!(o.exit_code(), 2);
    let text = std::fs::read_to_string(dir.path().join("verify_report.json")).unwrap();
    assert!(text.contains("IdentityViolation"), "{text}");
}

#[test]
fn non_cartan_polynomial_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = run(&load("negative/iso_not_cartan.toml"), Some(dir.path()), None).unwrap_err();
    assert!(matches!(err, RunError::Model(_)), "{err}");
}

#[test]
fn stochastic_task_requires_seed() {
    let mut c = load("t2.toml");
    c.seed = None;
    c.task = Task::Separate;
    let dir = tempfile::tempdir().unwrap();
    let err = run(&c, Some(dir.path()), None).unwrap_err();
    assert!(matches!(&err, RunError::Config(m) if m.contains("seed")), "{err}");
}

#[test]
fn parse_errors_report_position() {
    let err = RunConfig::parse("task = \"avg\"\n[model]\nkind = \"torus\"\nbogus = 1\n", Path::new(".")).unwrap_err();
    let RunError::Config(msg) = err else { panic!("expected config error") };
    assert!(msg.contains("line 4"), "{msg}");
    assert!(RunConfig::parse("task = \"bake\"\n", Path::new(".")).is_err());
}

#[test]
fn selftest_passes_and_detects_bad_tolerance() {
    let report = selftest(&configs(), None).unwrap();
    assert!(report.passed, "{}", report.matrix());
    let bad = selftest(&configs(), Some(1e2)).unwrap();
    assert!(!bad.passed);
    assert!(matches!(selftest(Path::new("/nonexistent/configs"), None), Err(RunError::Io(_))));
}

#[test]
fn export_writes_csv() {
    let mut c = load("hopf.toml");
    c.task = Task::Export;
    c.params.num_samples = Some(50);
    let dir = tempfile::tempdir().unwrap();
    let o = run(&c, Some(dir.path()), None).unwrap();
    assert!(o.passed);
    let csv = std::fs::read_to_string(dir.path().join("quotient_image.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
}
