use dae_discovery::benchgen::{CrnSpec, RunParams, SystemSpec};
use std::path::Path;
use std::process::{Command, Output};

fn daedisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daedisc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).unwrap()
}

/// Simulates clean CRN1 into `dir`, returning the CSV and truth paths.
fn simulate_crn1(dir: &Path) -> (String, String) {
    let spec = SystemSpec::Crn {
        spec: CrnSpec::crn1_default(),
        run: RunParams {
            horizon: 30.0,
            samples: 400,
            noise: 0.0,
            snr_db: None,
            seed: 0,
        },
    };
    let spec_path = dir.join("crn1.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    let csv = dir.join("crn1.csv").display().to_string();
    let truth = dir.join("truth.json").display().to_string();
    let out = daedisc(&[
        "simulate",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        &csv,
        "--truth",
        &truth,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (csv, truth)
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.json");
    std::fs::write(
        &path,
        format!(
            r#"{{"input": "crn1.csv", "truth": "truth.json", "library": {{"kind": "polynomial", "degree": 2}},
                "dynamics": {{"preference": ["A", "B"]}} {extra}}}"#
        ),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn simulate_discover_score() {
    let dir = tempfile::tempdir().unwrap();
    let (_, truth) = simulate_crn1(dir.path());
    let config = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let out = daedisc(&[
        "discover",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("0 = [E1] + [AE1] - 1.5"));
    assert!(report.contains("# metrics"));

    let equations = std::fs::read_to_string(out_dir.join("equations.txt")).unwrap();
    assert_eq!(
        equations.lines().filter(|l| l.starts_with("0 = ")).count(),
        2
    );
    assert_eq!(equations.lines().filter(|l| l.starts_with("d(")).count(), 2);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["algebraic_recovery_pct"], 100.0);

    let model = out_dir.join("model.json");
    let scored = daedisc(&[
        "score",
        "--model",
        model.to_str().unwrap(),
        "--truth",
        &truth,
    ]);
    assert!(scored.status.success());
    let v: serde_json::Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert_eq!(v["algebraic_recovery_pct"], 100.0);
}

#[test]
fn json_report_and_seed_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    simulate_crn1(dir.path());
    let config = write_config(dir.path(), "");
    let a = daedisc(&["discover", "--config", &config, "--seed", "7", "--json"]);
    let b = daedisc(&["discover", "--config", &config, "--seed", "7", "--json"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["model"]["algebraic"].as_array().unwrap().len(), 2);
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        r#"{"library": {"kind": "polynomial", "degree": 2}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = daedisc(&[
        "discover",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr_line(&out);
    assert_eq!(line["exit_code"], 2);
    assert!(line["code"].as_str().unwrap().ends_with(".config_error"));
    assert!(!out_dir.exists());
}

#[test]
fn unreachable_relation_count_exits_with_no_relations_code() {
    let dir = tempfile::tempdir().unwrap();
    simulate_crn1(dir.path());
    let config = write_config(dir.path(), r#", "algebraic": {"k": 40, "eps": "inf"}"#);
    let out_dir = dir.path().join("out");
    let out = daedisc(&[
        "discover",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stderr_line(&out)["code"], "algfinder.no_relations_found");
    assert!(!out_dir.exists());
}

#[test]
fn unreadable_data_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("crn1.csv"), "t,A\n0,1\n0,2\n").unwrap();
    std::fs::write(dir.path().join("truth.json"), "{}").unwrap();
    let config = write_config(dir.path(), "");
    let out = daedisc(&["discover", "--config", &config]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stderr_line(&out)["module"], "timeseries");
}

#[test]
fn sweep_writes_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    simulate_crn1(dir.path());
    let config = write_config(
        dir.path(),
        r#", "sweep": {"alpha": [0.001], "threshold": [0.1, 0.2]}"#,
    );
    let out_dir = dir.path().join("sweep");
    let out = daedisc(&[
        "discover",
        "--config",
        &config,
        "--sweep",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.as_bytes(), out.stdout.as_slice());
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn schema_and_argument_errors() {
    let out = daedisc(&["--print-schema"]);
    assert!(out.status.success());
    let schema: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(schema["properties"]["library"].is_object());

    let out = daedisc(&["discover"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_line(&out)["operation"], "parse_args");
    assert_eq!(daedisc(&[]).status.code(), Some(2));
}
