use std::fs;
use std::path::Path;
use std::process::Command;

use torlab::harness::{parse_scenario_str, run, HarnessError, Overrides, RunKind};

fn scenario(text: &str, kind: RunKind) -> Result<torlab::harness::Scenario, HarnessError> {
    parse_scenario_str(text, "test.json", Some(kind), Overrides::default())
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn minimal_segments_file_materializes_defaults() {
    let s = scenario(r#"{"params": {"n_min": 3, "n_max": 3}}"#, RunKind::Segments).unwrap();
    assert_eq!(s.omega, vec![[0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]]);
    assert_eq!(s.params.g, 2);
    assert_eq!(s.params.seed, 0);
    assert_eq!(s.params.frequencies.len(), 5);
    assert_eq!(s.x.alpha, vec!["0", "0"]);
    let v = serde_json::to_value(&s).unwrap();
    for key in ["tol", "theta_tol", "eps", "probe_count", "n_limit", "discrepancy_grid"] {
        assert!(v["params"].get(key).is_some(), "{key} missing");
    }
}

#[test]
fn validation_errors() {
    let err = scenario(r#"{"omega": [[0,1],[0.2,0],[0,0],[0,1]]}"#, RunKind::Segments).unwrap_err();
    assert!(matches!(&err, HarnessError::Validation(m) if m.contains("symmetric")), "{err}");
    let err = scenario(r#"{"params": {"eps": 0}}"#, RunKind::Census).unwrap_err();
    assert!(matches!(&err, HarnessError::Validation(m) if m.contains("eps")), "{err}");
    let err = scenario(r#"{"params": {"n_min": 4, "n_max": 2}}"#, RunKind::IntersectScan).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = scenario(r#"{"kind": "density"}"#, RunKind::Segments).unwrap_err();
    assert!(matches!(err, HarnessError::Validation(_)));
    let err = scenario("{\n  \"params\": {\"nope\": 1}\n}", RunKind::Segments).unwrap_err();
    match err {
        HarnessError::Parse { line, message, .. } => {
            assert_eq!(line, 2);
            assert!(message.contains("nope"));
        }
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn segments_and_delta_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(r#"{"params": {"n_min": 3, "n_max": 3, "g": 2}}"#, RunKind::Segments).unwrap();
    let m = run(&s, dir.path(), 1).unwrap();
    assert!(m.outputs.contains(&"segments.csv".to_string()));
    let mut rdr = csv::Reader::from_path(dir.path().join("segments.csv")).unwrap();
    assert_eq!(rdr.records().count(), 81);
    let summary = fs::read_to_string(dir.path().join("segment_summary.csv")).unwrap();
    assert_eq!(summary, "n,count,max_height\n3,81,3\n");

    let dir = tempfile::tempdir().unwrap();
    let s = scenario(r#"{"params": {"conditions": [[1, 2], [2, 3]]}}"#, RunKind::TorsionDelta).unwrap();
    run(&s, dir.path(), 1).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["delta"], "2/3");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["tolerances"]["eps"].is_number());
    // nothing but final files in the directory
    for e in fs::read_dir(dir.path()).unwrap() {
        assert!(!e.unwrap().file_name().to_string_lossy().starts_with('.'));
    }
}

#[test]
fn budget_overflow_maps_to_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(
        r#"{"params": {"point_y": [0.1, 0.2, 0.3, 0.4], "discrepancy_grid": 200, "n_limit": 10}}"#,
        RunKind::Equidist,
    )
    .unwrap();
    let err = run(&s, dir.path(), 1).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

const DETERMINISM_CASES: &[(RunKind, &str)] = &[
    (RunKind::Segments, r#"{"params": {"n_min": -3, "n_max": 4, "g": 2}}"#),
    (
        RunKind::Equidist,
        r#"{"params": {"point_y": [0.6180339887498949, 0.41421356237309515, 0.3, 0.7], "point_x": [0.1, 0.2, 0.3, 0.4], "n_limit": 5000}}"#,
    ),
    (
        RunKind::Census,
        r#"{"params": {"point_y": [0.6180339887498949, 0.41421356237309515, 0.7320508075688772, 0.7182818284590451], "point_x": [0.1, 0.2, 0.3, 0.4], "n_limit": 5000, "eps": 0.1}}"#,
    ),
    (
        RunKind::Density,
        r#"{"params": {"point_y": ["1/5", "0", "1/3", "0"], "point_x": ["3/5", "0", "0", "0"], "n_limit": 3000, "eps": 0.01}}"#,
    ),
    (
        RunKind::IntersectScan,
        r#"{"omega": [[0.13, 1.07], [0.31, 0.27], [0.31, 0.27], [-0.22, 1.19]],
            "y": {"translate": [[0.137, 0.291], [-0.213, 0.177]]},
            "params": {"n_min": 1, "n_max": 2, "grid_res": 64, "probe_count": 50, "seed": 9}}"#,
    ),
];

#[test]
fn csv_outputs_are_identical_across_runs_and_thread_counts() {
    for &(kind, text) in DETERMINISM_CASES {
        let s = scenario(text, kind).unwrap();
        let runs: Vec<_> = [1usize, 3, 1]
            .iter()
            .map(|&threads| {
                let dir = tempfile::tempdir().unwrap();
                run(&s, dir.path(), threads).unwrap();
                (csv_files(dir.path()), fs::read(dir.path().join("report.json")).ok(), dir)
            })
            .collect();
        assert!(!runs[0].0.is_empty());
        for r in &runs[1..] {
            assert_eq!(r.0, runs[0].0, "{} CSV output differs", kind.name());
            assert_eq!(r.1, runs[0].1, "{} report differs", kind.name());
        }
    }
}

#[test]
fn cli_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_torlab");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    let out = dir.path().join("out");

    fs::write(&cfg, r#"{"params": {"conditions": [[1, 2], [2, 3]]}}"#).unwrap();
    let st = Command::new(exe).args(["torsion-delta", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(fs::read_to_string(out.join("report.json")).unwrap().contains("\"2/3\""));

    fs::write(&cfg, r#"{"params": {"eps": 0}}"#).unwrap();
    let st = Command::new(exe).args(["census", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    fs::write(&cfg, r#"{"params": {"point_y": [0.1, 0.2, 0.3, 0.4], "discrepancy_grid": 200, "n_limit": 10}}"#).unwrap();
    let st = Command::new(exe).args(["equidist", "--threads", "2", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(3));

    fs::write(&cfg, r#"{"params": {"conditions": [[1, 2]]}}"#).unwrap();
    let blocked = dir.path().join("file-not-dir");
    fs::write(&blocked, "x").unwrap();
    let st = Command::new(exe).args(["torsion-delta", "--config"]).arg(&cfg).arg("--out").arg(&blocked).output().unwrap();
    assert_eq!(st.status.code(), Some(4));
}
