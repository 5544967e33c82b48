//! The `deskcar` binary: subcommands, artefacts and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn deskcar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deskcar")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn simulate(scenario: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--scenario", scenario, "--controller", "stanley", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    deskcar(&args)
}

#[test]
fn lists_bundled_scenarios() {
    let out = deskcar(&["scenarios", "list"]);
    assert_eq!(code(&out), 0);
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_string).collect();
    for want in [
        "straight_lane",
        "s_curve",
        "parking",
        "intersection_left",
        "intersection_right",
        "intersection_straight",
        "tunnel_crossing",
    ] {
        assert!(names.iter().any(|n| n == want), "{want} not listed");
    }
}

#[test]
fn completed_run_exits_zero_and_dumps_a_map() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = simulate("straight_lane", &run, &["--duration", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("log.csv").is_file());
    assert!(run.join("run.svg").is_file());

    let out = deskcar(&["map-dump", "--run", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let pgm = std::fs::read(run.join("map.pgm")).unwrap();
    let header = "P5\n480 200\n255\n";
    assert!(pgm.starts_with(header.as_bytes()));
    assert_eq!(pgm.len(), header.len() + 480 * 200);
    let txt = std::fs::read_to_string(run.join("map.txt")).unwrap();
    assert!(txt.contains("cell_size_m 0.05"));
}

#[test]
fn scenario_file_path_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.json");
    let text = include_str!("../scenarios/straight_lane.json");
    std::fs::write(&file, text).unwrap();
    let out = simulate(file.to_str().unwrap(), &dir.path().join("run"), &["--duration", "0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn collision_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: serde_json::Value =
        serde_json::from_str(include_str!("../scenarios/straight_lane.json")).unwrap();
    // the box sits under the car, so no sensor can see it coming
    s["obstacles"] = serde_json::json!([{ "min_x": 0.05, "min_y": -0.05, "max_x": 0.15, "max_y": 0.05 }]);
    let file = dir.path().join("wall.json");
    std::fs::write(&file, s.to_string()).unwrap();
    let run = dir.path().join("run");
    let out = simulate(file.to_str().unwrap(), &run, &["--duration", "5"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
    let summary = std::fs::read_to_string(run.join("summary.json")).unwrap();
    assert!(summary.contains("\"collision\""));
}

#[test]
fn road_exit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: serde_json::Value =
        serde_json::from_str(include_str!("../scenarios/straight_lane.json")).unwrap();
    s["road"]["segments"] = serde_json::json!([{ "kind": "line", "length_m": 2.0 }]);
    let file = dir.path().join("short.json");
    std::fs::write(&file, s.to_string()).unwrap();
    let out = simulate(file.to_str().unwrap(), &dir.path().join("run"), &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn configuration_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&simulate("no_such_scenario", &run, &[])), 3);
    assert_eq!(code(&simulate("straight_lane", &run, &["--dt", "-1"])), 3);

    let gains = dir.path().join("gains.json");
    std::fs::write(&gains, r#"{"stanley": {"k_he": -1.0}}"#).unwrap();
    assert_eq!(code(&simulate("straight_lane", &run, &["--gains", gains.to_str().unwrap()])), 3);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 99}"#).unwrap();
    assert_eq!(code(&simulate(bad.to_str().unwrap(), &run, &[])), 3);

    let out = deskcar(&["simulate", "--scenario", "straight_lane", "--controller", "bang-bang", "--out", "x"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = simulate("straight_lane", &blocker.join("run"), &["--duration", "0.2"]);
    assert_ne!(code(&out), 0);
    assert!(!out.stderr.is_empty());
}

#[test]
fn calibrate_range_writes_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.csv");
    let rows: String = [200.0, 500.0, 900.0, 1400.0]
        .iter()
        .map(|e| format!("{e},{}\n", 0.9 * e + 50.0))
        .collect();
    std::fs::write(&samples, format!("estimated_mm,true_mm\n{rows}")).unwrap();
    let out_file = dir.path().join("corr.json");
    let out = deskcar(&["calibrate-range", "--samples", samples.to_str().unwrap(), "--out", out_file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let corr: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert!((corr["coefficient"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert!((corr["intercept_mm"].as_f64().unwrap() - 50.0).abs() < 1e-9);

    std::fs::write(&samples, "estimated_mm,true_mm\n100,100\n").unwrap();
    let out = deskcar(&["calibrate-range", "--samples", samples.to_str().unwrap(), "--out", out_file.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}
