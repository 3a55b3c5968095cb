mod common;

use dae_discovery::benchgen::SystemSpec;
use dae_discovery::dynfinder::DiscoveredModel;
use dae_discovery::pipeline::{
    emit_report, load_data, run_pipeline, run_sweep, sweep_table, Eps, ErrorKind, PipelineConfig,
    Report, ReportFormat, SweepSpec,
};
use dae_discovery::timeseries::write_table;

#[test]
fn zero_relations_with_stage_disabled() {
    let mut cfg = common::crn1_clean();
    cfg.algebraic.k = Some(0);
    cfg.algebraic.eps = vec![Eps(f64::INFINITY)];
    let out = run_pipeline(&cfg, None).unwrap();
    assert!(out.model.algebraic.is_empty());
    assert!(out.trace.runs[0].steps.is_empty());
    assert_eq!(out.model.odes.len(), 4);
}

#[test]
fn missing_source_is_a_config_error() {
    let err = PipelineConfig::from_json(r#"{"library": {"kind": "polynomial", "degree": 2}}"#)
        .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Config);
    assert_eq!(err.exit_code(), 2);
    let line: serde_json::Value = serde_json::from_str(&err.to_json_line()).unwrap();
    for key in ["module", "operation", "code", "exit_code", "message"] {
        assert!(line.get(key).is_some(), "{key}");
    }
    assert!(!err.to_json_line().contains('\n'));
}

#[test]
fn failed_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::crn1_clean();
    cfg.generator = None;
    cfg.input = Some(dir.path().join("absent.csv"));
    let out = dir.path().join("out");
    let err = run_pipeline(&cfg, Some(&out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn csv_input_matches_generator_run() {
    let dir = tempfile::tempdir().unwrap();
    let generated = common::crn1_clean();
    let table = generated.generator.as_ref().unwrap().simulate().unwrap();
    let csv = dir.path().join("crn1.csv");
    write_table(&table, std::fs::File::create(&csv).unwrap()).unwrap();
    let truth = dir.path().join("truth.json");
    std::fs::write(
        &truth,
        generated
            .generator
            .as_ref()
            .unwrap()
            .truth()
            .unwrap()
            .to_json(),
    )
    .unwrap();

    let mut cfg = generated.clone();
    cfg.generator = None;
    cfg.input = Some(csv);
    cfg.truth = Some(truth);
    let from_csv = run_pipeline(&cfg, Some(&dir.path().join("out"))).unwrap();
    assert_eq!(
        from_csv.metrics.as_ref().unwrap().algebraic_recovery_pct,
        100.0
    );
    assert_eq!(
        from_csv.equations(),
        run_pipeline(&generated, None).unwrap().equations()
    );
    for f in ["model.json", "trace.json", "equations.txt", "metrics.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn json_report_round_trips_byte_identically() {
    let out = run_pipeline(&common::crn1_clean(), None).unwrap();
    let first = emit_report(&out.model, &out.trace, ReportFormat::Json);
    let parsed: Report = serde_json::from_slice(&first).unwrap();
    let model = DiscoveredModel::<f64>::from_file(&parsed.model).unwrap();
    let second = emit_report(&model, &parsed.trace, ReportFormat::Json);
    assert_eq!(first, second);
}

#[test]
fn text_report_lists_relations_in_discovery_order() {
    let out = run_pipeline(&common::crn1_clean(), None).unwrap();
    let text = String::from_utf8(emit_report(&out.model, &out.trace, ReportFormat::Text)).unwrap();
    assert!(text.contains("0 = [E1] + [AE1] - 1.5"));
    let sections: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(
        sections,
        [
            "# equations",
            "# roles",
            "# relation diagnostics",
            "# refinement"
        ]
    );
    let start = text.find("# relation diagnostics").unwrap();
    let iterations: Vec<usize> = text[start..]
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(iterations, [1, 2]);
    assert!(text.contains("rejected"));
}

#[test]
fn sweep_covers_the_grid_in_order() {
    let mut cfg = common::crn1_clean();
    cfg.sweep = Some(SweepSpec {
        alpha: vec![1e-3, 1e-2],
        threshold: vec![0.1, 0.2, 0.5],
    });
    let data = load_data(&cfg).unwrap();
    let rows = run_sweep(&cfg, &data).unwrap();
    let cells: Vec<(f64, f64)> = rows.iter().map(|r| (r.alpha, r.threshold)).collect();
    assert_eq!(
        cells,
        [
            (1e-3, 0.1),
            (1e-3, 0.2),
            (1e-3, 0.5),
            (1e-2, 0.1),
            (1e-2, 0.2),
            (1e-2, 0.5)
        ]
    );
    assert!(rows.iter().any(|r| r.recovery_pct == Some(100.0)));
    let csv = sweep_table(&rows);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("alpha,threshold,status,"));
}

#[test]
fn sweep_requires_a_grid() {
    let cfg = common::crn1_clean();
    let data = load_data(&cfg).unwrap();
    assert_eq!(run_sweep(&cfg, &data).unwrap_err().kind, ErrorKind::Config);
}

#[test]
fn config_file_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::crn1_clean().generator.unwrap();
    let table = spec.simulate().unwrap();
    write_table(
        &table,
        std::fs::File::create(dir.path().join("data.csv")).unwrap(),
    )
    .unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(
        &path,
        r#"{"input": "data.csv", "output": "out", "library": {"kind": "polynomial", "degree": 2},
            "dynamics": {"preference": ["A", "B"]}}"#,
    )
    .unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(
        cfg.input.as_deref(),
        Some(dir.path().join("data.csv").as_path())
    );
    run_pipeline(&cfg, None).unwrap();
    assert!(dir.path().join("out/model.json").is_file());
    assert!(matches!(spec, SystemSpec::Crn { .. }));
}

#[test]
fn example_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = PipelineConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(cfg.generator.is_some() && cfg.output.as_ref().is_some_and(|o| o.is_absolute()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
