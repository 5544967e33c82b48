//! Sign-announced intersection crossing with traffic-light precedence.
//!
//! A turn or straight-ahead sign arms the machine; the car approaches the
//! stop line under lane following, waits while the filtered light is red,
//! then drives a fixed-radius arc (or a straight segment) through the
//! unmarked intersection, steering by gyro heading alone.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::signs::{SignClass, SignEvent};
use super::{Overlay, Transition};
use crate::control::PathError;
use crate::kinematics::{angle_diff, VehicleParams};

pub const MACHINE: &str = "intersection";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TurnKind {
    Left,
    Right,
    Straight,
}

impl TurnKind {
    pub const ALL: [TurnKind; 3] = [TurnKind::Left, TurnKind::Right, TurnKind::Straight];

    pub fn from_sign(class: SignClass) -> Option<Self> {
        match class {
            SignClass::TurnLeft => Some(TurnKind::Left),
            SignClass::TurnRight => Some(TurnKind::Right),
            SignClass::Straight => Some(TurnKind::Straight),
            _ => None,
        }
    }

    /// Heading change the manoeuvre must produce, left positive.
    pub fn target_delta_rad(&self) -> f64 {
        match self {
            TurnKind::Left => FRAC_PI_2,
            TurnKind::Right => -FRAC_PI_2,
            TurnKind::Straight => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntersectionNode {
    LaneFollow,
    SignSeen,
    Align,
    WaitTrafficLight,
    ExecuteTurn(TurnKind),
    Exit,
}

impl IntersectionNode {
    pub const ALL: [IntersectionNode; 8] = [
        IntersectionNode::LaneFollow,
        IntersectionNode::SignSeen,
        IntersectionNode::Align,
        IntersectionNode::WaitTrafficLight,
        IntersectionNode::ExecuteTurn(TurnKind::Left),
        IntersectionNode::ExecuteTurn(TurnKind::Right),
        IntersectionNode::ExecuteTurn(TurnKind::Straight),
        IntersectionNode::Exit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IntersectionNode::LaneFollow => "LaneFollow",
            IntersectionNode::SignSeen => "SignSeen",
            IntersectionNode::Align => "Align",
            IntersectionNode::WaitTrafficLight => "WaitTrafficLight",
            IntersectionNode::ExecuteTurn(TurnKind::Left) => "ExecuteTurnLeft",
            IntersectionNode::ExecuteTurn(TurnKind::Right) => "ExecuteTurnRight",
            IntersectionNode::ExecuteTurn(TurnKind::Straight) => "ExecuteTurnStraight",
            IntersectionNode::Exit => "Exit",
        }
    }

    pub fn is_execute_turn(&self) -> bool {
        matches!(self, IntersectionNode::ExecuteTurn(_))
    }
}

/// Filtered traffic-light state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LightState {
    Red,
    Green,
}

impl LightState {
    /// Numeric encoding used when the light stream is filtered.
    pub fn as_sample(&self) -> f64 {
        match self {
            LightState::Red => 1.0,
            LightState::Green => 0.0,
        }
    }

    pub fn from_filtered(mean: f64) -> Self {
        if mean >= 0.5 {
            LightState::Red
        } else {
            LightState::Green
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntersectionEvent {
    Tick,
    TurnSign(TurnKind),
    StopLineReached,
    LightRed,
    LightClear,
    TurnComplete,
    ExitComplete,
}

impl IntersectionEvent {
    pub const ALL: [IntersectionEvent; 9] = [
        IntersectionEvent::Tick,
        IntersectionEvent::TurnSign(TurnKind::Left),
        IntersectionEvent::TurnSign(TurnKind::Right),
        IntersectionEvent::TurnSign(TurnKind::Straight),
        IntersectionEvent::StopLineReached,
        IntersectionEvent::LightRed,
        IntersectionEvent::LightClear,
        IntersectionEvent::TurnComplete,
        IntersectionEvent::ExitComplete,
    ];

    pub fn cause(&self) -> &'static str {
        match self {
            IntersectionEvent::Tick => "tick",
            IntersectionEvent::TurnSign(TurnKind::Left) => "sign-turn-left",
            IntersectionEvent::TurnSign(TurnKind::Right) => "sign-turn-right",
            IntersectionEvent::TurnSign(TurnKind::Straight) => "sign-straight",
            IntersectionEvent::StopLineReached => "stop-line",
            IntersectionEvent::LightRed => "light-red",
            IntersectionEvent::LightClear => "light-clear",
            IntersectionEvent::TurnComplete => "turn-complete",
            IntersectionEvent::ExitComplete => "exit-complete",
        }
    }
}

/// Every edge the machine may take besides staying put.
pub fn edges() -> Vec<(IntersectionNode, IntersectionNode)> {
    use IntersectionNode as N;
    let mut e = vec![
        (N::LaneFollow, N::SignSeen),
        (N::SignSeen, N::Align),
        (N::Align, N::WaitTrafficLight),
        (N::Exit, N::LaneFollow),
    ];
    for k in TurnKind::ALL {
        e.push((N::WaitTrafficLight, N::ExecuteTurn(k)));
        e.push((N::ExecuteTurn(k), N::WaitTrafficLight));
        e.push((N::ExecuteTurn(k), N::Exit));
    }
    e
}

/// Successor of `node` under `event`, given the turn the machine has planned.
pub fn transition(node: IntersectionNode, event: IntersectionEvent, planned: TurnKind) -> IntersectionNode {
    use IntersectionEvent as E;
    use IntersectionNode as N;
    match (node, event) {
        (N::LaneFollow, E::TurnSign(_)) => N::SignSeen,
        (N::SignSeen, E::Tick) => N::Align,
        (N::Align, E::StopLineReached) => N::WaitTrafficLight,
        (N::WaitTrafficLight, E::LightClear) => N::ExecuteTurn(planned),
        (N::ExecuteTurn(_), E::LightRed) => N::WaitTrafficLight,
        (N::ExecuteTurn(_), E::TurnComplete) => N::Exit,
        (N::Exit, E::ExitComplete) => N::LaneFollow,
        (n, _) => n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntersectionConfig {
    /// A turn sign closer than this arms the machine.
    pub trigger_m: f64,
    pub approach_speed_mps: f64,
    pub turn_radius_m: f64,
    pub turn_speed_mps: f64,
    pub wheelbase_m: f64,
    pub heading_tol_rad: f64,
    /// Distance driven through the intersection when going straight.
    pub straight_distance_m: f64,
    /// Heading-hold gain while crossing straight.
    pub straight_heading_gain: f64,
    /// Lane following at reduced speed after the manoeuvre.
    pub exit_distance_m: f64,
    /// Camera position ahead of the rear axle.
    pub camera_forward_m: f64,
    /// How far short of the sign's position the rear axle stops.
    pub stop_before_sign_m: f64,
}

impl Default for IntersectionConfig {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

impl IntersectionConfig {
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        Self {
            trigger_m: 1.0,
            approach_speed_mps: 0.3,
            turn_radius_m: 0.8,
            turn_speed_mps: 0.3,
            wheelbase_m: p.wheelbase_m,
            heading_tol_rad: 5f64.to_radians(),
            straight_distance_m: 1.6,
            straight_heading_gain: 1.0,
            exit_distance_m: 0.5,
            camera_forward_m: 0.30,
            stop_before_sign_m: 0.0,
        }
    }

    /// Steering angle that holds the configured turn radius.
    pub fn turn_steer_rad(&self) -> f64 {
        (self.wheelbase_m / self.turn_radius_m).atan()
    }
}

/// Pick one sign from simultaneous candidates: highest confidence wins, ties
/// go to the earliest in the slice. The flag reports whether there was more
/// than one candidate.
pub fn pick_sign(candidates: &[SignEvent]) -> Option<(SignEvent, bool)> {
    let mut best: Option<SignEvent> = None;
    for c in candidates {
        if best.is_none_or(|b| c.confidence > b.confidence) {
            best = Some(*c);
        }
    }
    best.map(|b| (b, candidates.len() > 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntersectionInputs<'a> {
    /// Turn and straight-ahead signs this step, nearest first.
    pub turn_signs: &'a [SignEvent],
    /// Last filtered light state, `None` if no light has been seen.
    pub light: Option<LightState>,
    pub gyro_heading_rad: f64,
    pub path_error: Option<PathError>,
    /// Signed odometry distance covered during the last step.
    pub travelled_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionOutput {
    pub overlay: Overlay,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionFsm {
    node: IntersectionNode,
    planned: TurnKind,
    to_stop_line_m: f64,
    entry_heading_rad: f64,
    crossed_m: f64,
    exit_m: f64,
}

impl Default for IntersectionFsm {
    fn default() -> Self {
        Self {
            node: IntersectionNode::LaneFollow,
            planned: TurnKind::Straight,
            to_stop_line_m: 0.0,
            entry_heading_rad: 0.0,
            crossed_m: 0.0,
            exit_m: 0.0,
        }
    }
}

impl IntersectionFsm {
    pub fn node(&self) -> IntersectionNode {
        self.node
    }

    pub fn planned(&self) -> TurnKind {
        self.planned
    }

    pub fn entry_heading_rad(&self) -> f64 {
        self.entry_heading_rad
    }

    /// Heading change since the entry heading was recorded.
    pub fn heading_delta_rad(&self, gyro_heading_rad: f64) -> f64 {
        angle_diff(gyro_heading_rad, self.entry_heading_rad)
    }

    fn light_event(light: Option<LightState>) -> IntersectionEvent {
        match light {
            Some(LightState::Red) => IntersectionEvent::LightRed,
            _ => IntersectionEvent::LightClear,
        }
    }

    fn observe(&self, inputs: &IntersectionInputs, cfg: &IntersectionConfig) -> IntersectionEvent {
        use IntersectionEvent as E;
        match self.node {
            IntersectionNode::LaneFollow => pick_sign(inputs.turn_signs)
                .filter(|(s, _)| s.distance_m <= cfg.trigger_m)
                .and_then(|(s, _)| TurnKind::from_sign(s.class))
                .map_or(E::Tick, E::TurnSign),
            IntersectionNode::SignSeen => E::Tick,
            IntersectionNode::Align => {
                if self.to_stop_line_m <= 0.0 {
                    E::StopLineReached
                } else {
                    E::Tick
                }
            }
            IntersectionNode::WaitTrafficLight => Self::light_event(inputs.light),
            IntersectionNode::ExecuteTurn(kind) => {
                if inputs.light == Some(LightState::Red) {
                    return E::LightRed;
                }
                let done = match kind {
                    TurnKind::Straight => self.crossed_m >= cfg.straight_distance_m,
                    _ => {
                        let target = kind.target_delta_rad();
                        let delta = self.heading_delta_rad(inputs.gyro_heading_rad);
                        target.signum() * (delta - target) >= 0.0 && (delta - target).abs() <= cfg.heading_tol_rad
                    }
                };
                if done {
                    E::TurnComplete
                } else {
                    E::Tick
                }
            }
            IntersectionNode::Exit => {
                if self.exit_m >= cfg.exit_distance_m {
                    E::ExitComplete
                } else {
                    E::Tick
                }
            }
        }
    }

    fn enter(&mut self, node: IntersectionNode, inputs: &IntersectionInputs, cfg: &IntersectionConfig) {
        match node {
            IntersectionNode::SignSeen => {
                if let Some((sign, _)) = pick_sign(inputs.turn_signs) {
                    self.planned = TurnKind::from_sign(sign.class).unwrap_or(TurnKind::Straight);
                    self.to_stop_line_m =
                        sign.forward_distance_m() + cfg.camera_forward_m - cfg.stop_before_sign_m;
                }
                self.record_entry_heading(inputs);
            }
            IntersectionNode::ExecuteTurn(_) => self.crossed_m = 0.0,
            IntersectionNode::Exit => self.exit_m = 0.0,
            _ => {}
        }
    }

    /// The road direction is the vehicle heading plus the heading error.
    fn record_entry_heading(&mut self, inputs: &IntersectionInputs) {
        let he = inputs.path_error.map_or(0.0, |e| e.heading_err_rad);
        self.entry_heading_rad = inputs.gyro_heading_rad + he;
    }

    fn accumulate(&mut self, inputs: &IntersectionInputs) {
        let d = inputs.travelled_m.abs();
        match self.node {
            IntersectionNode::SignSeen | IntersectionNode::Align => {
                self.to_stop_line_m -= d;
                if inputs.path_error.is_some() {
                    self.record_entry_heading(inputs);
                }
            }
            IntersectionNode::ExecuteTurn(_) => self.crossed_m += d,
            IntersectionNode::Exit => self.exit_m += d,
            _ => {}
        }
    }

    fn command(&self, inputs: &IntersectionInputs, cfg: &IntersectionConfig) -> Overlay {
        match self.node {
            IntersectionNode::LaneFollow => Overlay::NONE,
            IntersectionNode::SignSeen | IntersectionNode::Align => Overlay::speed(cfg.approach_speed_mps),
            IntersectionNode::WaitTrafficLight => Overlay::stop(),
            IntersectionNode::ExecuteTurn(TurnKind::Straight) => {
                let err = angle_diff(self.entry_heading_rad, inputs.gyro_heading_rad);
                Overlay::drive(cfg.turn_speed_mps, cfg.straight_heading_gain * err)
            }
            IntersectionNode::ExecuteTurn(kind) => Overlay::drive(
                cfg.turn_speed_mps,
                kind.target_delta_rad().signum() * cfg.turn_steer_rad(),
            ),
            IntersectionNode::Exit => Overlay::speed(cfg.turn_speed_mps),
        }
    }

    pub fn step(&mut self, inputs: &IntersectionInputs, cfg: &IntersectionConfig) -> IntersectionOutput {
        self.accumulate(inputs);
        let mut transitions = Vec::new();
        // a stop line reached on green chains straight into the turn
        for _ in 0..2 {
            let event = self.observe(inputs, cfg);
            let from = self.node;
            let to = transition(from, event, self.planned);
            if to == from {
                break;
            }
            let conflict = matches!(event, IntersectionEvent::TurnSign(_)) && inputs.turn_signs.len() > 1;
            self.enter(to, inputs, cfg);
            self.node = to;
            let mut cause = event.cause().to_string();
            if conflict {
                cause.push_str(" (conflict)");
            }
            transitions.push(Transition {
                machine: MACHINE,
                from: from.name(),
                to: to.name(),
                cause,
            });
            if to != IntersectionNode::WaitTrafficLight {
                break;
            }
        }
        IntersectionOutput {
            overlay: self.command(inputs, cfg),
            transitions,
        }
    }
}
