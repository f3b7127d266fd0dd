//! End-to-end tests of the `edgeflow` binary: exit codes, validation
//! reports, and the trajectory/summary/reference file formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_edgeflow")
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_fixture(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn check_passes_on_bundled_scenarios() {
    for name in ["formation_edge_only.json", "formation_with_objectives.json"] {
        let out = run_cli(&["check", scenario_path(name).to_str().unwrap()]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{name}: {stdout}");
        for check in ["rank", "consistency", "connectivity", "well_configured", "feasibility"] {
            assert!(stdout.contains(&format!("{check}: pass")), "{name}: {stdout}");
        }
    }
}

#[test]
fn check_fails_on_a_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(
        dir.path(),
        "disconnected.json",
        r#"{
            "version": 1, "n": 1,
            "agents": [
                {"id": 1, "objective": {"type": "zero"}},
                {"id": 2, "objective": {"type": "zero"}},
                {"id": 3, "objective": {"type": "zero"}}
            ],
            "edges": [{"i": 1, "j": 2, "A": [[1.0]], "b": [0.0]}],
            "mode": "edge_only",
            "init": {"type": "uniform", "low": -1.0, "high": 1.0, "seed": 1},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&["check", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("connectivity: fail"), "{stdout}");
    assert!(stdout.contains("feasibility: skipped"), "{stdout}");
}

#[test]
fn check_fails_on_a_rank_deficient_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(
        dir.path(),
        "rank_deficient.json",
        r#"{
            "version": 1, "n": 2,
            "agents": [
                {"id": 1, "objective": {"type": "zero"}},
                {"id": 2, "objective": {"type": "zero"}}
            ],
            "edges": [{"i": 1, "j": 2, "A": [[1.0, 0.0], [2.0, 0.0]], "b": [0.0, 0.0]}],
            "mode": "edge_only",
            "init": {"type": "uniform", "low": -1.0, "high": 1.0, "seed": 1},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&["check", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rank: fail"), "{stdout}");
}

#[test]
fn check_fails_on_an_inconsistent_cycle() {
    let dir = tempfile::tempdir().unwrap();
    // Offsets sum to 3 around the cycle; no state satisfies them.
    let fixture = write_fixture(
        dir.path(),
        "inconsistent.json",
        r#"{
            "version": 1, "n": 1,
            "agents": [
                {"id": 1, "objective": {"type": "zero"}},
                {"id": 2, "objective": {"type": "zero"}},
                {"id": 3, "objective": {"type": "zero"}}
            ],
            "edges": [
                {"i": 1, "j": 2, "A": [[1.0]], "b": [1.0]},
                {"i": 2, "j": 3, "A": [[1.0]], "b": [1.0]},
                {"i": 3, "j": 1, "A": [[1.0]], "b": [1.0]}
            ],
            "mode": "edge_only",
            "init": {"type": "uniform", "low": -1.0, "high": 1.0, "seed": 1},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&["check", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("feasibility: fail"), "{stdout}");

    // Loading for a run fails with the same named check.
    let out = run_cli(&["run", fixture.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("feasibility"), "{stderr}");
}

#[test]
fn check_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(
        dir.path(),
        "typo.json",
        r#"{
            "version": 1, "n": 1, "mode": "edge_only", "surprise": true,
            "agents": [{"id": 1, "objective": {"type": "zero"}}],
            "edges": [],
            "init": {"type": "uniform", "low": -1.0, "high": 1.0, "seed": 1},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&["check", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("schema error"), "{stderr}");
}

#[test]
fn run_writes_csv_and_summary_for_the_agreement_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        scenario_path("formation_edge_only.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    // 4 agents, n = 2: t + 8 states + 8 multipliers + V; no W column
    // because the agreement-only run has no reference solution.
    assert_eq!(
        header,
        "t,x_1_1,x_1_2,x_2_1,x_2_2,x_3_1,x_3_2,x_4_1,x_4_2,\
         lambda_1_1,lambda_1_2,lambda_2_1,lambda_2_2,lambda_3_1,lambda_3_2,lambda_4_1,lambda_4_2,V"
    );
    let mut previous_t = f64::NEG_INFINITY;
    let mut last_v = f64::NAN;
    for line in csv.lines().skip(1) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 18);
        assert!(fields[0] > previous_t, "time must strictly increase");
        previous_t = fields[0];
        last_v = fields[17];
    }
    assert!(last_v <= 1e-10, "final V from CSV: {last_v}");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["final_V"].as_f64().unwrap() <= 1e-10);
    assert!(summary.get("final_W").is_none());
    assert_eq!(summary["locality_ok"], serde_json::Value::Bool(true));
    assert_eq!(summary["seed"].as_u64(), Some(1));
    assert_eq!(summary["tool_version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(summary["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(summary["fitted_rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_emits_the_distance_column_when_a_reference_exists() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        scenario_path("formation_with_objectives.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.ends_with(",V,W"), "{header}");
    let last = csv.lines().last().unwrap();
    let fields: Vec<f64> = last.split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields.len(), 19);
    assert!(fields[18] <= 1e-6, "final W from CSV: {}", fields[18]);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["final_W"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn csv_round_trips_the_in_memory_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_path("formation_edge_only.json");
    let out = run_cli(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());

    // The run is deterministic, so an in-process run with the same file
    // reproduces the exact trajectory the CSV encodes.
    let scenario = edgeflow::scenario::load_scenario(&path).unwrap();
    let (trajectory, _) = edgeflow::harness::run(&scenario).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for (line, state) in csv.lines().skip(1).zip(&trajectory.states) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        relative_eq(fields[0], state.t);
        for (k, expected) in state.x.iter().enumerate() {
            relative_eq(fields[1 + k], *expected);
        }
    }
}

fn relative_eq(parsed: f64, expected: f64) {
    let scale = expected.abs().max(1e-300);
    assert!(
        (parsed - expected).abs() / scale <= 1e-15,
        "parse-back mismatch: {parsed} vs {expected}"
    );
}

#[test]
fn zero_horizon_produces_exactly_one_data_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        scenario_path("formation_edge_only.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--t-end",
        "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "header plus one data row");
}

#[test]
fn seed_override_changes_the_trajectory() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let path = scenario_path("formation_edge_only.json");
    for (dir, seed) in [(&dir_a, "7"), (&dir_b, "8")] {
        let out = run_cli(&[
            "run",
            path.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            seed,
            "--t-end",
            "1",
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read_to_string(dir_a.path().join("trajectory.csv")).unwrap();
    let b = std::fs::read_to_string(dir_b.path().join("trajectory.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn reference_solves_the_optimization_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "reference",
        scenario_path("formation_with_objectives.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reference.json")).unwrap())
            .unwrap();
    assert!(doc["kkt_residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(doc["x_star"].as_array().unwrap().len(), 8);
    assert_eq!(doc["mu_star"].as_array().unwrap().len(), 8);
    assert!(doc["objective_value"].as_f64().is_some());
}

#[test]
fn reference_reports_unbounded_for_constant_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(
        dir.path(),
        "all_zero_saddle.json",
        r#"{
            "version": 1, "n": 1,
            "agents": [
                {"id": 1, "objective": {"type": "zero"}},
                {"id": 2, "objective": {"type": "zero"}}
            ],
            "edges": [{"i": 1, "j": 2, "A": [[1.0]], "b": [1.0]}],
            "mode": "saddle_point",
            "init": {"type": "uniform", "low": -1.0, "high": 1.0, "seed": 1},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&["reference", fixture.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no unique bounded optimum"), "{stderr}");
}

#[test]
fn quadratic_reference_matches_the_kkt_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(
        dir.path(),
        "quadratic_pair.json",
        r#"{
            "version": 1, "n": 1,
            "agents": [
                {"id": 1, "objective": {"type": "squared_distance", "params": {"target": [1.0]}}},
                {"id": 2, "objective": {"type": "squared_distance", "params": {"target": [3.0]}}}
            ],
            "edges": [{"i": 1, "j": 2, "A": [[1.0]], "b": [0.0]}],
            "mode": "saddle_point",
            "init": {"type": "uniform", "low": -1.0, "high": 1.0, "seed": 1},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&["reference", fixture.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reference.json")).unwrap())
            .unwrap();
    let x = doc["x_star"].as_array().unwrap();
    assert!((x[0].as_f64().unwrap() - 2.0).abs() <= 1e-8);
    assert!((x[1].as_f64().unwrap() - 2.0).abs() <= 1e-8);
}

#[test]
fn seed_override_is_rejected_for_explicit_init() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(
        dir.path(),
        "explicit.json",
        r#"{
            "version": 1, "n": 1,
            "agents": [
                {"id": 1, "objective": {"type": "zero"}},
                {"id": 2, "objective": {"type": "zero"}}
            ],
            "edges": [{"i": 1, "j": 2, "A": [[1.0]], "b": [0.0]}],
            "mode": "edge_only",
            "init": {"type": "explicit", "x0": [1.0, -1.0]},
            "integrator": {"method": "rk45_adaptive", "t_end": 1.0, "record_every": 0.1}
        }"#,
    );
    let out = run_cli(&[
        "run",
        fixture.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
