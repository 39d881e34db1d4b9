use std::fs;

use piag::experiment::{report_summary, run_experiment, summarize_paths, CellReport, CellStatus, ExperimentConfig};

const QUADRATIC: &str = r#"
name = "minimal"
iterations = 300

[problem]
generator = "constrained_quadratic"
n = 3
seed = 4
box_lo = -1.0
box_hi = 1.0

[policy]
kind = "full"
"#;

const LASSO_SWEEP: &str = r#"
name = "sweep"
iterations = 3000

[problem]
generator = "regularized_least_squares"
m = 20
n = 5
seed = 2024
l1_weight = 0.1
l2_weight = 1.0

[sweep]
staleness = [0, 4, 19]
"#;

#[test]
fn minimal_config_writes_one_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(QUADRATIC).unwrap();
    let out = run_experiment(&cfg, Some(tmp.path()), 1).unwrap();
    assert_eq!(out.exit_code(), 0, "{}", out.summary);
    let mut names: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["report_base.json", "summary.txt", "trace_base.csv"]);
    let csv = fs::read_to_string(tmp.path().join("trace_base.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 301);
    let report: CellReport =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report_base.json")).unwrap()).unwrap();
    assert_eq!(report.status, CellStatus::Certified);
    assert_eq!(report.staleness, Some(0));
}

#[test]
fn sweep_rate_slows_as_staleness_grows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(LASSO_SWEEP).unwrap();
    let out = run_experiment(&cfg, Some(tmp.path()), 3).unwrap();
    assert_eq!(out.exit_code(), 0, "{}", out.summary);
    let rates: Vec<f64> = out.cells.iter().map(|c| c.report.empirical_rate.unwrap()).collect();
    assert_eq!(out.cells.len(), 3);
    assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
    for c in &out.cells {
        assert!(c.report.empirical_rate.unwrap() <= c.report.envelope_rate.unwrap());
    }
}

#[test]
fn oversized_step_reports_divergence() {
    // a box keeps iterates bounded, so divergence needs the unconstrained problem
    let text = LASSO_SWEEP.replace("[sweep]\nstaleness = [0, 4, 19]", "[step]\nmode = \"scaled\"\nscale = 10.0");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, Some(tmp.path()), 1).unwrap();
    assert_eq!(out.exit_code(), 1);
    let rep = &out.cells[0].report;
    assert_eq!(rep.status, CellStatus::Diverged);
    assert!(rep.diagnostic.as_ref().unwrap().contains("diverged"), "{:?}", rep.diagnostic);
    assert!(out.summary.contains("DIVERGED"));
    assert_eq!(rep.cell, "base");
    assert!(tmp.path().join("report_base.json").exists());
    assert!(!tmp.path().join("trace_base.csv").exists());
}

#[test]
fn summary_of_directory_and_corrupted_reports() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(report_summary(tmp.path()).unwrap().text, "");
    let cfg = ExperimentConfig::from_toml(QUADRATIC).unwrap();
    run_experiment(&cfg, Some(tmp.path()), 1).unwrap();
    let s = report_summary(tmp.path()).unwrap();
    assert!(!s.failed);
    assert!(s.text.lines().skip(1).all(|l| !l.contains("FAIL")));

    // corrupt a margin so the report fails
    let path = tmp.path().join("report_base.json");
    let mut rep: CellReport = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    rep.cell = "corrupt".into();
    rep.checks[1].worst_margin = Some(-1.0);
    rep.checks[1].pass = false;
    rep.checks[1].status = piag::certify::CheckStatus::Fail;
    rep.checks[1].first_violation = Some(3);
    fs::write(tmp.path().join("report_zz.json"), serde_json::to_string(&rep).unwrap()).unwrap();
    let s = report_summary(tmp.path()).unwrap();
    assert!(s.failed);
    assert_eq!(s.exit_code(), 1);
    let first = s.text.lines().nth(1).unwrap();
    assert!(first.starts_with("corrupt") && first.contains("FAIL"), "{}", s.text);

    fs::write(tmp.path().join("report_bad.json"), "{not json").unwrap();
    let s = summarize_paths(&[tmp.path().join("report_bad.json")]);
    assert!(s.failed && s.text.contains("ERROR"));
}

#[test]
fn seed_override_changes_the_problem() {
    let mut cfg = ExperimentConfig::from_toml(QUADRATIC).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, Some(a.path()), 1).unwrap();
    cfg.seed = Some(99);
    run_experiment(&cfg, Some(b.path()), 1).unwrap();
    let read = |d: &std::path::Path| fs::read(d.join("trace_base.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn json_config_from_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(QUADRATIC).unwrap();
    let path = tmp.path().join("cfg.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::from_path(&path).unwrap(), cfg);
    let toml_path = tmp.path().join("cfg.toml");
    fs::write(&toml_path, QUADRATIC).unwrap();
    assert_eq!(ExperimentConfig::from_path(&toml_path).unwrap(), cfg);
}
