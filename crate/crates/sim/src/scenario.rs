//! Scenario description: road geometry, obstacles, signs, lights and bays.

use std::f64::consts::PI;

use deskcar_core::fsm::{LightState, SignClass};
use deskcar_core::grid::GridSpec;
use deskcar_core::kinematics::{normalize_angle, VehicleParams, VehicleState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("could not parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Schema(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("no bundled scenario named {0:?}")]
    UnknownBundled(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub heading_rad: f64,
}

impl From<Pose> for VehicleState {
    fn from(p: Pose) -> Self {
        VehicleState::new(p.x_m, p.y_m, p.heading_rad)
    }
}

/// One piece of road centreline. Positive arc angles turn left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Line {
        length_m: f64,
        #[serde(default = "yes")]
        marked: bool,
    },
    Arc {
        radius_m: f64,
        angle_rad: f64,
        #[serde(default = "yes")]
        marked: bool,
    },
}

impl Segment {
    pub fn length_m(&self) -> f64 {
        match *self {
            Segment::Line { length_m, .. } => length_m,
            Segment::Arc { radius_m, angle_rad, .. } => radius_m * angle_rad.abs(),
        }
    }

    pub fn marked(&self) -> bool {
        match *self {
            Segment::Line { marked, .. } | Segment::Arc { marked, .. } => marked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub start: Pose,
    #[serde(default = "default_lane_width")]
    pub lane_width_m: f64,
    pub segments: Vec<Segment>,
}

fn default_lane_width() -> f64 {
    0.70
}

/// Axis-aligned rectangle in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.min_x, self.min_y),
            (self.max_x, self.min_y),
            (self.max_x, self.max_y),
            (self.min_x, self.max_y),
        ]
    }

    /// Smallest ray parameter `t ≥ 0` at which `origin + t·dir` touches the
    /// rectangle, by the slab method.
    pub fn ray_hit(&self, origin: (f64, f64), dir: (f64, f64)) -> Option<f64> {
        let mut t_lo = 0.0f64;
        let mut t_hi = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.0, dir.0, self.min_x, self.max_x),
            (origin.1, dir.1, self.min_y, self.max_y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                t_lo = t_lo.max(a);
                t_hi = t_hi.min(b);
            }
        }
        (t_lo <= t_hi).then_some(t_lo)
    }

    fn validate(&self, what: &str) -> Result<(), ScenarioError> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y].iter().all(|v| v.is_finite());
        if finite && self.min_x < self.max_x && self.min_y < self.max_y {
            Ok(())
        } else {
            Err(invalid(format!("{what} rectangle must be finite with min < max")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignSpec {
    pub class: SignClass,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default = "default_sign_height")]
    pub real_height_mm: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_sign_height() -> f64 {
    150.0
}

fn default_confidence() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPhase {
    pub state: LightState,
    pub duration_s: f64,
}

/// A traffic light cycling through its phases once and then holding the
/// last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLightSpec {
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default = "default_light_height")]
    pub real_height_mm: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    pub schedule: Vec<LightPhase>,
}

fn default_light_height() -> f64 {
    100.0
}

impl TrafficLightSpec {
    pub fn state_at(&self, t_s: f64) -> LightState {
        let mut end = 0.0;
        for phase in &self.schedule {
            end += phase.duration_s;
            if t_s < end {
                return phase.state;
            }
        }
        self.schedule.last().map_or(LightState::Green, |p| p.state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub dt_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub initial_state: Pose,
    #[serde(default)]
    pub vehicle: VehicleParams,
    pub road: RoadSpec,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    #[serde(default)]
    pub signs: Vec<SignSpec>,
    #[serde(default)]
    pub traffic_lights: Vec<TrafficLightSpec>,
    #[serde(default)]
    pub parking_bays: Vec<Rect>,
    /// Occupancy map extent; defaults to 20 m square around the start.
    #[serde(default)]
    pub map: Option<GridSpec>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Schema(self.schema_version));
        }
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return Err(invalid("dt_s must be positive"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s must be positive"));
        }
        let p = self.initial_state;
        if ![p.x_m, p.y_m, p.heading_rad].iter().all(|v| v.is_finite()) {
            return Err(invalid("initial_state must be finite"));
        }
        self.vehicle.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.road.lane_width_m.is_finite() && self.road.lane_width_m > 0.0) {
            return Err(invalid("lane_width_m must be positive"));
        }
        if self.road.segments.is_empty() {
            return Err(invalid("road needs at least one segment"));
        }
        for seg in &self.road.segments {
            let ok = match *seg {
                Segment::Line { length_m, .. } => length_m.is_finite() && length_m > 0.0,
                Segment::Arc { radius_m, angle_rad, .. } => {
                    radius_m.is_finite() && radius_m > 0.0 && angle_rad.is_finite() && angle_rad != 0.0
                }
            };
            if !ok {
                return Err(invalid("segments need positive length, radius and non-zero angle"));
            }
        }
        for r in &self.obstacles {
            r.validate("obstacle")?;
        }
        for r in &self.parking_bays {
            r.validate("parking bay")?;
        }
        for s in &self.signs {
            if !(s.x_m.is_finite() && s.y_m.is_finite() && s.real_height_mm > 0.0) {
                return Err(invalid("signs need a finite position and positive height"));
            }
            if !(0.0..=1.0).contains(&s.confidence) {
                return Err(invalid("sign confidence must be in [0, 1]"));
            }
        }
        for l in &self.traffic_lights {
            if !(l.x_m.is_finite() && l.y_m.is_finite() && l.real_height_mm > 0.0) {
                return Err(invalid("traffic lights need a finite position and positive height"));
            }
            if l.schedule.is_empty() || l.schedule.iter().any(|p| !(p.duration_s >= 0.0)) {
                return Err(invalid("traffic light schedule needs phases with non-negative durations"));
            }
        }
        if let Some(m) = &self.map {
            m.validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn road(&self) -> Road {
        Road::build(&self.road)
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.map
            .unwrap_or_else(|| GridSpec::centered(self.initial_state.x_m, self.initial_state.y_m, 20.0, 0.05))
    }

    pub fn in_parking_bay(&self, x: f64, y: f64) -> bool {
        self.parking_bays.iter().any(|b| b.contains(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Line,
    /// Signed curvature direction and centre.
    Arc { radius_m: f64, turn: f64, centre: (f64, f64) },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    start_s: f64,
    length_m: f64,
    start: Pose,
    shape: Shape,
    marked: bool,
}

impl Piece {
    fn pose_at(&self, u: f64) -> Pose {
        let h = self.start.heading_rad;
        match self.shape {
            Shape::Line => Pose {
                x_m: self.start.x_m + u * h.cos(),
                y_m: self.start.y_m + u * h.sin(),
                heading_rad: h,
            },
            Shape::Arc { radius_m, turn, centre } => {
                let phi = h + turn * u / radius_m;
                Pose {
                    x_m: centre.0 + turn * radius_m * phi.sin(),
                    y_m: centre.1 - turn * radius_m * phi.cos(),
                    heading_rad: normalize_angle(phi),
                }
            }
        }
    }

    /// Unclamped arc-length parameter of the foot point of `(x, y)`.
    fn foot(&self, x: f64, y: f64) -> f64 {
        let h = self.start.heading_rad;
        match self.shape {
            Shape::Line => (x - self.start.x_m) * h.cos() + (y - self.start.y_m) * h.sin(),
            Shape::Arc { radius_m, turn, centre } => {
                // angle swept from the start radius, in the direction of travel
                let a0 = (self.start.y_m - centre.1).atan2(self.start.x_m - centre.0);
                let a = (y - centre.1).atan2(x - centre.0);
                let mut swept = turn * (a - a0);
                swept = normalize_angle(swept);
                // measure behind the start as negative, beyond the end as past it
                let span = self.length_m / radius_m;
                if swept < 0.0 && swept < -(PI - 0.5 * span) {
                    swept += 2.0 * PI;
                }
                swept * radius_m
            }
        }
    }
}

/// Where a point sits relative to the road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the nearest centreline point.
    pub s_m: f64,
    /// Signed offset from the centreline, left positive.
    pub lateral_m: f64,
    pub heading_rad: f64,
    /// Distance along the road past its last point, zero when on the road.
    pub beyond_end_m: f64,
}

/// Built road: contiguous pieces with arc-length bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pieces: Vec<Piece>,
    pub lane_width_m: f64,
    pub length_m: f64,
}

impl Road {
    pub fn build(spec: &RoadSpec) -> Self {
        let mut pieces = Vec::with_capacity(spec.segments.len());
        let mut pose = spec.start;
        let mut s = 0.0;
        for seg in &spec.segments {
            let length_m = seg.length_m();
            let shape = match *seg {
                Segment::Line { .. } => Shape::Line,
                Segment::Arc { radius_m, angle_rad, .. } => {
                    let turn = angle_rad.signum();
                    let h = pose.heading_rad;
                    Shape::Arc {
                        radius_m,
                        turn,
                        centre: (pose.x_m - turn * radius_m * h.sin(), pose.y_m + turn * radius_m * h.cos()),
                    }
                }
            };
            let piece = Piece {
                start_s: s,
                length_m,
                start: pose,
                shape,
                marked: seg.marked(),
            };
            pose = piece.pose_at(length_m);
            s += length_m;
            pieces.push(piece);
        }
        Self {
            pieces,
            lane_width_m: spec.lane_width_m,
            length_m: s,
        }
    }

    fn piece_at(&self, s: f64) -> &Piece {
        self.pieces
            .iter()
            .rev()
            .find(|p| s >= p.start_s)
            .unwrap_or(&self.pieces[0])
    }

    /// Centreline pose at arc length `s`, clamped to the road.
    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length_m);
        let p = self.piece_at(s);
        p.pose_at((s - p.start_s).min(p.length_m))
    }

    pub fn is_marked(&self, s: f64) -> bool {
        s >= 0.0 && s <= self.length_m && self.piece_at(s).marked
    }

    /// Left and right lane boundary points at arc length `s`.
    pub fn boundaries_at(&self, s: f64) -> ((f64, f64), (f64, f64)) {
        let c = self.pose_at(s);
        let half = 0.5 * self.lane_width_m;
        let (sin, cos) = c.heading_rad.sin_cos();
        (
            (c.x_m - half * sin, c.y_m + half * cos),
            (c.x_m + half * sin, c.y_m - half * cos),
        )
    }

    pub fn project(&self, x: f64, y: f64) -> Projection {
        let mut best: Option<(f64, Projection)> = None;
        let last = self.pieces.len() - 1;
        for (i, p) in self.pieces.iter().enumerate() {
            let raw = p.foot(x, y);
            let u = raw.clamp(0.0, p.length_m);
            let c = p.pose_at(u);
            let (dx, dy) = (x - c.x_m, y - c.y_m);
            let dist = dx.hypot(dy);
            let (sin, cos) = c.heading_rad.sin_cos();
            let beyond_end_m = if i == last && raw > p.length_m {
                (dx * cos + dy * sin).max(0.0)
            } else {
                0.0
            };
            let proj = Projection {
                s_m: p.start_s + u,
                lateral_m: -dx * sin + dy * cos,
                heading_rad: c.heading_rad,
                beyond_end_m,
            };
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, proj));
            }
        }
        best.map(|(_, p)| p).expect("road has at least one piece")
    }

    /// Centreline sampled every `step_m`, end point included.
    pub fn polyline(&self, step_m: f64) -> Vec<(f64, f64)> {
        let n = (self.length_m / step_m).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| {
                let p = self.pose_at(self.length_m * k as f64 / n as f64);
                (p.x_m, p.y_m)
            })
            .collect()
    }
}

const BUNDLED: [(&str, &str); 7] = [
    ("straight_lane", include_str!("../scenarios/straight_lane.json")),
    ("s_curve", include_str!("../scenarios/s_curve.json")),
    ("parking", include_str!("../scenarios/parking.json")),
    ("intersection_left", include_str!("../scenarios/intersection_left.json")),
    ("intersection_right", include_str!("../scenarios/intersection_right.json")),
    ("intersection_straight", include_str!("../scenarios/intersection_straight.json")),
    ("tunnel_crossing", include_str!("../scenarios/tunnel_crossing.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))?;
    Scenario::from_json(text)
}
