use std::path::PathBuf;
use std::process::{Command, Output};

use rem::io::{records_from_json, MethodTag, OutputRecord, WarningCode};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn rem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rem"))
        .args(args)
        .env("REM_LOG", "off")
        .output()
        .expect("binary runs")
}

fn data_args(stem: &str) -> Vec<String> {
    vec![
        "--observations".into(),
        fixture(&format!("{stem}_observations.csv"))
            .display()
            .to_string(),
        "--units".into(),
        fixture(&format!("{stem}_units.csv")).display().to_string(),
    ]
}

fn run_ok(cmd: &str, stem: &str, extra: &[&str]) -> Vec<OutputRecord> {
    let mut args = vec![cmd.to_string()];
    args.extend(data_args(stem));
    args.extend(extra.iter().map(|s| s.to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rem(&argv);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    records_from_json(&String::from_utf8(out.stdout).unwrap()).unwrap()
}

#[test]
fn global_fit_at_covariate_mean_matches_barycenter() {
    let recs = run_ok(
        "fit-predict",
        "fig1",
        &["--method", "global", "--queries", "3,5"],
    );
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].query, vec![3.0]);
    assert_eq!(recs[0].method, MethodTag::RemGlobal);
    assert!(recs[0].quantiles.windows(2).all(|w| w[0] <= w[1]));
    assert!((recs[0].diagnostics.weight_max.unwrap() - 2.2).abs() < 1e-12);
    assert!((recs[0].diagnostics.weight_min.unwrap() + 0.2).abs() < 1e-12);

    let bary = run_ok("barycenter", "fig1", &[]);
    assert_eq!(bary[0].method, MethodTag::Barycenter);
    assert_eq!(recs[1].quantiles, bary[0].quantiles);
    assert_eq!(recs[1].grid_size, 10);
}

#[test]
fn local_with_two_covariates_is_a_usage_error() {
    let mut args = vec!["fit-predict".to_string()];
    args.extend(data_args("two_covariates"));
    args.extend(["--method", "local", "--queries", "0,0"].map(String::from));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rem(&argv);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "usage");
}

#[test]
fn global_with_two_covariates_works() {
    let recs = run_ok(
        "fit-predict",
        "two_covariates",
        &["--queries", "0.1,0.2;0,0"],
    );
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1].query, vec![0.0, 0.0]);
}

#[test]
fn two_step_reports_the_excluded_singleton() {
    let recs = run_ok(
        "fit-predict",
        "singleton",
        &["--method", "two-step", "--queries", "0"],
    );
    assert_eq!(recs.len(), 1);
    let d = &recs[0].diagnostics;
    assert_eq!(d.excluded_units, 1);
    assert_eq!(d.excluded_unit_ids, vec!["p"]);
    assert_eq!(d.units, 4);
    assert!(d
        .warnings
        .iter()
        .any(|w| w.code == WarningCode::TwoStepExcluded));
    assert_eq!(recs[0].grid_size, 1000);

    // the same data through REM keeps every unit
    let recs = run_ok("fit-predict", "singleton", &["--queries", "0"]);
    assert_eq!(recs[0].diagnostics.excluded_units, 0);
    assert_eq!(recs[0].diagnostics.units, 5);
}

#[test]
fn zero_observation_unit_is_named_in_diagnostics() {
    let recs = run_ok("fit-predict", "zero_obs", &["--queries", "5"]);
    let d = &recs[0].diagnostics;
    assert_eq!(d.units, 4);
    assert_eq!(d.excluded_unit_ids, vec!["empty"]);
    let w = d
        .warnings
        .iter()
        .find(|w| w.code == WarningCode::ZeroObservationUnit)
        .unwrap();
    assert!(w.message.contains("empty"));
}

#[test]
fn local_fit_with_density_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred.csv");
    let mut args = vec!["fit-predict".to_string()];
    args.extend(data_args("singleton"));
    args.extend(
        [
            "--method",
            "local",
            "--bandwidth",
            "1.5",
            "--queries",
            "0",
            "--density",
            "--density-points",
            "64",
            "--format",
            "csv",
            "--out",
        ]
        .map(String::from),
    );
    args.push(out.display().to_string());
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let res = rem(&argv);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("query,method,kind,index,x,value"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|r| r.contains(",density,")).count(), 64);
    assert!(rows.iter().all(|r| r.starts_with("0,rem-local,")));
}

#[test]
fn domain_violation_and_bad_queries_fail_cleanly() {
    let mut args = vec!["fit-predict".to_string()];
    args.extend(data_args("fig1"));
    args.extend(["--queries", "5", "--domain", "0,4"].map(String::from));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rem(&argv);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "invalid_argument");

    let mut args = vec!["fit-predict".to_string()];
    args.extend(data_args("fig1"));
    args.extend(["--queries", "five"].map(String::from));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(rem(&argv).status.code(), Some(2));
}

#[test]
fn query_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("queries.csv");
    std::fs::write(&q, "z1\n3\n5\n").unwrap();
    let recs = run_ok("fit-predict", "fig1", &["--queries", q.to_str().unwrap()]);
    assert_eq!(recs.len(), 2);
}

#[test]
fn simulate_writes_results_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let o = rem(&[
            "simulate",
            "--setting",
            "IV",
            "--n-ladder",
            "30",
            "--runs",
            "2",
            "--seed",
            "7",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let table = String::from_utf8(o.stdout).unwrap();
        assert!(
            table.contains("rem-local") && table.contains("two-step"),
            "{table}"
        );
        out_dir
    };
    let a = run("a");
    let b = run("b");
    for f in ["runs.jsonl", "summary.json", "summary.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let o = rem(&[
        "simulate",
        "--setting",
        "V",
        "--out-dir",
        a.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
