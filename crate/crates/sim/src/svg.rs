//! Top-down plot of a run: road, obstacles, signs, the true and estimated
//! paths, and where the state machines changed state.

use std::fmt::Write;

use crate::runner::RunLog;
use crate::scenario::Scenario;

const PX_PER_M: f64 = 100.0;
const MARGIN_M: f64 = 0.5;

struct Frame {
    min_x: f64,
    max_y: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        (x - self.min_x + MARGIN_M) * PX_PER_M
    }

    /// SVG rows grow downwards.
    fn y(&self, y: f64) -> f64 {
        (self.max_y - y + MARGIN_M) * PX_PER_M
    }

    fn pt(&self, p: (f64, f64)) -> String {
        format!("{:.1},{:.1}", self.x(p.0), self.y(p.1))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn path_d(frame: &Frame, pts: &[(f64, f64)]) -> String {
    let mut d = String::new();
    for (i, p) in pts.iter().enumerate() {
        let _ = write!(d, "{}{} ", if i == 0 { "M" } else { "L" }, frame.pt(*p));
    }
    d.trim_end().to_string()
}

pub fn render(log: &RunLog, scenario: &Scenario) -> String {
    let road = scenario.road();
    let centre = road.polyline(0.05);
    let truth: Vec<(f64, f64)> = log.records.iter().map(|r| (r.truth.x_m, r.truth.y_m)).collect();
    let estimate: Vec<(f64, f64)> = log.records.iter().map(|r| (r.estimate.x_m, r.estimate.y_m)).collect();

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let half = 0.5 * road.lane_width_m;
    for p in centre.iter().chain(&truth).chain(&estimate) {
        xs.extend([p.0 - half, p.0 + half]);
        ys.extend([p.1 - half, p.1 + half]);
    }
    for r in scenario.obstacles.iter().chain(&scenario.parking_bays) {
        xs.extend([r.min_x, r.max_x]);
        ys.extend([r.min_y, r.max_y]);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame {
        min_x: min(&xs),
        max_y: max(&ys),
    };
    let width = (max(&xs) - min(&xs) + 2.0 * MARGIN_M) * PX_PER_M;
    let height = (max(&ys) - min(&ys) + 2.0 * MARGIN_M) * PX_PER_M;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(
        s,
        r#"<title>{} ({})</title>"#,
        escape(&log.scenario),
        log.controller.name()
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#f4f4f0"/>"##);
    let _ = writeln!(
        s,
        r##"<path id="road" d="{}" fill="none" stroke="#c8c8c8" stroke-width="{:.1}" stroke-linejoin="round"/>"##,
        path_d(&frame, &centre),
        road.lane_width_m * PX_PER_M
    );
    for (i, b) in scenario.parking_bays.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<rect id="bay-{i}" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#3070c0" stroke-dasharray="6 4"/>"##,
            frame.x(b.min_x),
            frame.y(b.max_y),
            (b.max_x - b.min_x) * PX_PER_M,
            (b.max_y - b.min_y) * PX_PER_M
        );
    }
    for (i, o) in scenario.obstacles.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<rect id="obstacle-{i}" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#606060"/>"##,
            frame.x(o.min_x),
            frame.y(o.max_y),
            (o.max_x - o.min_x) * PX_PER_M,
            (o.max_y - o.min_y) * PX_PER_M
        );
    }
    for sign in &scenario.signs {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="#e0a000"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"##,
            frame.x(sign.x_m),
            frame.y(sign.y_m),
            frame.x(sign.x_m) + 8.0,
            frame.y(sign.y_m) - 8.0,
            sign.class.label()
        );
    }
    for light in &scenario.traffic_lights {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="#d03030"/><text x="{:.1}" y="{:.1}" font-size="12">traffic_light</text>"##,
            frame.x(light.x_m),
            frame.y(light.y_m),
            frame.x(light.x_m) + 8.0,
            frame.y(light.y_m) - 8.0
        );
    }
    let points = |pts: &[(f64, f64)]| pts.iter().map(|p| frame.pt(*p)).collect::<Vec<_>>().join(" ");
    let _ = writeln!(
        s,
        r##"<polyline id="truth" points="{}" fill="none" stroke="#202020" stroke-width="2"/>"##,
        points(&truth)
    );
    let _ = writeln!(
        s,
        r##"<polyline id="estimate" points="{}" fill="none" stroke="#2080d0" stroke-width="1.5" stroke-dasharray="5 3"/>"##,
        points(&estimate)
    );
    for tr in &log.transitions {
        let Some(r) = log.records.get(tr.step as usize) else {
            continue;
        };
        let (x, y) = (frame.x(r.truth.x_m), frame.y(r.truth.y_m));
        let _ = writeln!(
            s,
            r##"<g class="transition"><circle cx="{x:.1}" cy="{y:.1}" r="3" fill="#c03080"/><text x="{:.1}" y="{:.1}" font-size="10">{}: {}</text></g>"##,
            x + 5.0,
            y + 12.0,
            tr.machine,
            escape(tr.to)
        );
    }
    s.push_str("</svg>\n");
    s
}
