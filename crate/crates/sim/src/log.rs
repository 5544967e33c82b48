//! Run artefacts: the step log, transition log, summary and final map.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use deskcar_core::grid::GridSnapshot;
use serde::Serialize;

use crate::runner::{Outcome, RunLog, StepRecord, TurnResult};

pub const CSV_COLUMNS: [&str; 18] = [
    "step",
    "t",
    "x_true",
    "y_true",
    "theta_true",
    "x_est",
    "y_est",
    "theta_est",
    "ce",
    "he",
    "steer_cmd",
    "speed_cmd",
    "controller",
    "parking_node",
    "intersection_node",
    "hazard",
    "headlights",
    "nearest_obstacle_m",
];

pub const LOG_FILE: &str = "log.csv";
pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const GRID_FILE: &str = "grid.json";
pub const PLOT_FILE: &str = "run.svg";

/// Nine significant digits, the shortest text that reads back to the
/// rounded value, and no negative zero.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn csv_row(r: &StepRecord) -> Vec<String> {
    vec![
        r.step.to_string(),
        fmt_sig9(r.t_s),
        fmt_sig9(r.truth.x_m),
        fmt_sig9(r.truth.y_m),
        fmt_sig9(r.truth.theta_rad),
        fmt_sig9(r.estimate.x_m),
        fmt_sig9(r.estimate.y_m),
        fmt_sig9(r.estimate.theta_rad),
        fmt_sig9(r.ce_m),
        fmt_sig9(r.he_rad),
        fmt_sig9(r.steer_cmd_rad),
        fmt_sig9(r.speed_cmd_mps),
        r.controller.name().to_string(),
        r.parking_node.name().to_string(),
        r.intersection_node.name().to_string(),
        flag(r.hazard).to_string(),
        flag(r.headlights).to_string(),
        r.nearest_obstacle_m.map(fmt_sig9).unwrap_or_default(),
    ]
}

/// The step log as CSV text.
pub fn csv_string(records: &[StepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(csv_row(r))?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    Ok(String::from_utf8(bytes)?)
}

pub fn transitions_string(log: &RunLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "t", "machine", "from", "to", "cause"])?;
    for tr in &log.transitions {
        w.write_record([
            tr.step.to_string(),
            fmt_sig9(tr.t_s),
            tr.machine.to_string(),
            tr.from.to_string(),
            tr.to.to_string(),
            tr.cause.clone(),
        ])?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    Ok(String::from_utf8(bytes)?)
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub scenario: &'a str,
    pub controller: &'static str,
    pub seed: u64,
    pub dt_s: f64,
    pub steps: usize,
    pub outcome: &'a Outcome,
    pub collisions: usize,
    pub final_parking_node: &'static str,
    pub final_intersection_node: &'static str,
    pub max_abs_ce_m: f64,
    pub max_speed_cmd_mps: f64,
    pub turns: &'a [TurnResult],
}

pub fn summary(log: &RunLog) -> Summary<'_> {
    let last = log.records.last();
    Summary {
        scenario: &log.scenario,
        controller: log.controller.name(),
        seed: log.seed,
        dt_s: log.dt_s,
        steps: log.records.len(),
        outcome: &log.outcome,
        collisions: log.collisions(),
        final_parking_node: last.map_or("LaneFollow", |r| r.parking_node.name()),
        final_intersection_node: last.map_or("LaneFollow", |r| r.intersection_node.name()),
        max_abs_ce_m: log.records.iter().fold(0.0, |m, r| m.max(r.ce_m.abs())),
        max_speed_cmd_mps: log.records.iter().fold(0.0, |m, r| m.max(r.speed_cmd_mps)),
        turns: &log.turns,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Write every artefact of a run into `dir`, creating it if needed.
pub fn write_run(dir: &Path, log: &RunLog, svg: &str) -> Result<()> {
    anyhow::ensure!(!log.records.is_empty(), "run log is empty");
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join(LOG_FILE), &csv_string(&log.records)?)?;
    write(&dir.join(TRANSITIONS_FILE), &transitions_string(log)?)?;
    write(&dir.join(SUMMARY_FILE), &serde_json::to_string_pretty(&summary(log))?)?;
    write(&dir.join(GRID_FILE), &serde_json::to_string(&log.grid.snapshot())?)?;
    write(&dir.join(PLOT_FILE), svg)?;
    Ok(())
}

pub fn read_grid(run_dir: &Path) -> Result<GridSnapshot> {
    let path = run_dir.join(GRID_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(0.1234567891234), "0.123456789");
        assert_eq!(fmt_sig9(-0.0), "0");
        assert_eq!(fmt_sig9(1e-20), "0.00000000000000000001");
        assert_eq!(fmt_sig9(123456.7891), "123456.789");
        assert_eq!(fmt_sig9(2.0), "2");
    }

    #[test]
    fn round_trip_keeps_written_precision() {
        for v in [1.0 / 3.0, -2.0 / 7.0, 12345.678901, 9.87654321e-5] {
            let back: f64 = fmt_sig9(v).parse().unwrap();
            assert!(((back - v) / v).abs() <= 5e-9, "{v} -> {back}");
            assert_eq!(fmt_sig9(back), fmt_sig9(v));
        }
    }
}
