//! Sign-triggered parallel parking.
//!
//! After a park sign the car switches its hazard lights on, creeps along the
//! lane while the right-hand range sensor measures free space, drives past a
//! large enough gap, reverses in along two opposite arcs at full lock, waits,
//! and pulls out along the mirrored path.

use serde::{Deserialize, Serialize};

use super::{Overlay, Transition};
use crate::kinematics::{angle_diff, VehicleParams};

pub const MACHINE: &str = "parking";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParkingNode {
    LaneFollow,
    HazardOn,
    ScanForGap,
    AlignPreGap,
    ReverseIn,
    Straighten,
    Parked,
    PullOut,
    Resume,
}

impl ParkingNode {
    pub const ALL: [ParkingNode; 9] = [
        ParkingNode::LaneFollow,
        ParkingNode::HazardOn,
        ParkingNode::ScanForGap,
        ParkingNode::AlignPreGap,
        ParkingNode::ReverseIn,
        ParkingNode::Straighten,
        ParkingNode::Parked,
        ParkingNode::PullOut,
        ParkingNode::Resume,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParkingNode::LaneFollow => "LaneFollow",
            ParkingNode::HazardOn => "HazardOn",
            ParkingNode::ScanForGap => "ScanForGap",
            ParkingNode::AlignPreGap => "AlignPreGap",
            ParkingNode::ReverseIn => "ReverseIn",
            ParkingNode::Straighten => "Straighten",
            ParkingNode::Parked => "Parked",
            ParkingNode::PullOut => "PullOut",
            ParkingNode::Resume => "Resume",
        }
    }

    /// Nodes from HazardOn through PullOut, during which the hazard lights
    /// stay on.
    pub fn is_manoeuvre(&self) -> bool {
        !matches!(self, ParkingNode::LaneFollow | ParkingNode::Resume)
    }
}

/// What the step function observed, reduced to the table's alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParkingEvent {
    Tick,
    ParkSign,
    GapFound,
    ScanExhausted,
    AlignReached,
    SwingComplete,
    Straightened,
    DwellElapsed,
    PullOutComplete,
}

impl ParkingEvent {
    pub const ALL: [ParkingEvent; 9] = [
        ParkingEvent::Tick,
        ParkingEvent::ParkSign,
        ParkingEvent::GapFound,
        ParkingEvent::ScanExhausted,
        ParkingEvent::AlignReached,
        ParkingEvent::SwingComplete,
        ParkingEvent::Straightened,
        ParkingEvent::DwellElapsed,
        ParkingEvent::PullOutComplete,
    ];

    pub fn cause(&self) -> &'static str {
        match self {
            ParkingEvent::Tick => "tick",
            ParkingEvent::ParkSign => "park-sign",
            ParkingEvent::GapFound => "gap-found",
            ParkingEvent::ScanExhausted => "no-gap",
            ParkingEvent::AlignReached => "aligned",
            ParkingEvent::SwingComplete => "swing-complete",
            ParkingEvent::Straightened => "straightened",
            ParkingEvent::DwellElapsed => "dwell-elapsed",
            ParkingEvent::PullOutComplete => "pulled-out",
        }
    }
}

/// Every edge the machine may take besides staying put.
pub const EDGES: [(ParkingNode, ParkingNode); 10] = [
    (ParkingNode::LaneFollow, ParkingNode::HazardOn),
    (ParkingNode::HazardOn, ParkingNode::ScanForGap),
    (ParkingNode::ScanForGap, ParkingNode::AlignPreGap),
    (ParkingNode::ScanForGap, ParkingNode::LaneFollow),
    (ParkingNode::AlignPreGap, ParkingNode::ReverseIn),
    (ParkingNode::ReverseIn, ParkingNode::Straighten),
    (ParkingNode::Straighten, ParkingNode::Parked),
    (ParkingNode::Parked, ParkingNode::PullOut),
    (ParkingNode::PullOut, ParkingNode::Resume),
    (ParkingNode::Resume, ParkingNode::HazardOn),
];

pub fn transition(node: ParkingNode, event: ParkingEvent) -> ParkingNode {
    use ParkingEvent as E;
    use ParkingNode as N;
    match (node, event) {
        (N::LaneFollow, E::ParkSign) | (N::Resume, E::ParkSign) => N::HazardOn,
        (N::HazardOn, E::Tick) => N::ScanForGap,
        (N::ScanForGap, E::GapFound) => N::AlignPreGap,
        (N::ScanForGap, E::ScanExhausted) => N::LaneFollow,
        (N::AlignPreGap, E::AlignReached) => N::ReverseIn,
        (N::ReverseIn, E::SwingComplete) => N::Straighten,
        (N::Straighten, E::Straightened) => N::Parked,
        (N::Parked, E::DwellElapsed) => N::PullOut,
        (N::PullOut, E::PullOutComplete) => N::Resume,
        (n, _) => n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParkingConfig {
    /// A park sign closer than this starts the manoeuvre.
    pub trigger_m: f64,
    pub scan_speed_mps: f64,
    pub gap_length_m: f64,
    /// Side clearance that counts as free space.
    pub gap_depth_m: f64,
    /// Distance scanned before giving up.
    pub scan_length_m: f64,
    /// Distance driven past the point where the gap was confirmed.
    pub align_distance_m: f64,
    pub manoeuvre_speed_mps: f64,
    pub max_steer_rad: f64,
    pub wheelbase_m: f64,
    /// Sideways displacement of the rear axle from lane to bay.
    pub lateral_shift_m: f64,
    pub dwell_s: f64,
    pub collision_stop_m: f64,
    pub heading_tol_rad: f64,
}

impl Default for ParkingConfig {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

impl ParkingConfig {
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        Self {
            trigger_m: 1.0,
            scan_speed_mps: 0.25,
            gap_length_m: 1.2 * p.overall_length_m,
            gap_depth_m: 1.2 * p.overall_width_m,
            scan_length_m: 4.0,
            align_distance_m: 0.75,
            manoeuvre_speed_mps: 0.2,
            max_steer_rad: p.max_steer_rad,
            wheelbase_m: p.wheelbase_m,
            lateral_shift_m: 0.5,
            dwell_s: 1.0,
            collision_stop_m: 0.10,
            heading_tol_rad: 5f64.to_radians(),
        }
    }

    pub fn min_turning_radius_m(&self) -> f64 {
        self.wheelbase_m / self.max_steer_rad.tan()
    }

    /// Heading change of each of the two arcs. Two opposite arcs of radius
    /// `R` through angle `a` displace the car sideways by `2R(1 − cos a)`.
    pub fn swing_angle_rad(&self) -> f64 {
        let r = self.min_turning_radius_m();
        (1.0 - self.lateral_shift_m / (2.0 * r)).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SideRanges {
    pub front_m: Option<f64>,
    pub rear_m: Option<f64>,
    pub left_m: Option<f64>,
    pub right_m: Option<f64>,
}

impl SideRanges {
    pub fn min(&self) -> Option<f64> {
        [self.front_m, self.rear_m, self.left_m, self.right_m]
            .into_iter()
            .flatten()
            .min_by(|a, b| a.total_cmp(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParkingInputs {
    /// Filtered distance to a park sign seen this step.
    pub park_sign_m: Option<f64>,
    pub ranges: SideRanges,
    /// Estimated vehicle heading.
    pub heading_rad: f64,
    /// Direction of the lane, when the lane pipeline provides one.
    pub lane_heading_rad: Option<f64>,
    /// Signed odometry distance covered during the last step.
    pub travelled_m: f64,
    pub dt_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkingOutput {
    pub overlay: Overlay,
    pub hazard: bool,
    /// The manoeuvre is paused because something is closer than the
    /// collision-stop distance.
    pub holding: bool,
    pub transition: Option<Transition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PullOutPhase {
    Swing,
    Return,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkingFsm {
    node: ParkingNode,
    lane_heading_rad: f64,
    scanned_m: f64,
    gap_run_m: f64,
    /// Length of free space measured when the gap was accepted.
    measured_gap_m: Option<f64>,
    aligned_m: f64,
    dwell_s: f64,
    pull_out: PullOutPhase,
}

impl Default for ParkingFsm {
    fn default() -> Self {
        Self {
            node: ParkingNode::LaneFollow,
            lane_heading_rad: 0.0,
            scanned_m: 0.0,
            gap_run_m: 0.0,
            measured_gap_m: None,
            aligned_m: 0.0,
            dwell_s: 0.0,
            pull_out: PullOutPhase::Swing,
        }
    }
}

impl ParkingFsm {
    pub fn node(&self) -> ParkingNode {
        self.node
    }

    pub fn lane_heading_rad(&self) -> f64 {
        self.lane_heading_rad
    }

    pub fn measured_gap_m(&self) -> Option<f64> {
        self.measured_gap_m
    }

    /// Heading relative to the lane recorded when the manoeuvre began.
    fn relative_heading(&self, inputs: &ParkingInputs) -> f64 {
        angle_diff(inputs.heading_rad, self.lane_heading_rad)
    }

    fn observe(&mut self, inputs: &ParkingInputs, cfg: &ParkingConfig) -> ParkingEvent {
        use ParkingEvent as E;
        let dist = inputs.travelled_m.abs();
        match self.node {
            ParkingNode::LaneFollow | ParkingNode::Resume => match inputs.park_sign_m {
                Some(d) if d <= cfg.trigger_m => E::ParkSign,
                _ => E::Tick,
            },
            ParkingNode::HazardOn => E::Tick,
            ParkingNode::ScanForGap => {
                self.scanned_m += dist;
                match inputs.ranges.right_m {
                    Some(r) if r >= cfg.gap_depth_m => self.gap_run_m += dist,
                    Some(_) => self.gap_run_m = 0.0,
                    None => {}
                }
                if self.gap_run_m >= cfg.gap_length_m {
                    E::GapFound
                } else if self.scanned_m >= cfg.scan_length_m {
                    E::ScanExhausted
                } else {
                    E::Tick
                }
            }
            ParkingNode::AlignPreGap => {
                self.aligned_m += dist;
                if self.aligned_m >= cfg.align_distance_m {
                    E::AlignReached
                } else {
                    E::Tick
                }
            }
            ParkingNode::ReverseIn => {
                if self.relative_heading(inputs) >= cfg.swing_angle_rad() {
                    E::SwingComplete
                } else {
                    E::Tick
                }
            }
            ParkingNode::Straighten => {
                let rel = self.relative_heading(inputs);
                if rel <= 0.0 && rel.abs() < cfg.heading_tol_rad {
                    E::Straightened
                } else {
                    E::Tick
                }
            }
            ParkingNode::Parked => {
                self.dwell_s += inputs.dt_s;
                if self.dwell_s >= cfg.dwell_s {
                    E::DwellElapsed
                } else {
                    E::Tick
                }
            }
            ParkingNode::PullOut => {
                let rel = self.relative_heading(inputs);
                match self.pull_out {
                    PullOutPhase::Swing => {
                        if rel >= cfg.swing_angle_rad() {
                            self.pull_out = PullOutPhase::Return;
                        }
                        E::Tick
                    }
                    PullOutPhase::Return if rel <= 0.0 => E::PullOutComplete,
                    PullOutPhase::Return => E::Tick,
                }
            }
        }
    }

    fn enter(&mut self, node: ParkingNode, inputs: &ParkingInputs) {
        match node {
            ParkingNode::HazardOn => {
                self.lane_heading_rad = inputs.lane_heading_rad.unwrap_or(inputs.heading_rad);
                self.measured_gap_m = None;
            }
            ParkingNode::ScanForGap => {
                self.scanned_m = 0.0;
                self.gap_run_m = 0.0;
            }
            ParkingNode::AlignPreGap => {
                self.measured_gap_m = Some(self.gap_run_m);
                self.aligned_m = 0.0;
            }
            ParkingNode::Parked => self.dwell_s = 0.0,
            ParkingNode::PullOut => self.pull_out = PullOutPhase::Swing,
            _ => {}
        }
    }

    fn command(&self, cfg: &ParkingConfig) -> Overlay {
        let v = cfg.manoeuvre_speed_mps;
        let lock = cfg.max_steer_rad;
        match self.node {
            ParkingNode::LaneFollow | ParkingNode::Resume => Overlay::NONE,
            ParkingNode::HazardOn | ParkingNode::ScanForGap | ParkingNode::AlignPreGap => {
                Overlay::speed(cfg.scan_speed_mps)
            }
            ParkingNode::ReverseIn => Overlay::drive(-v, -lock),
            ParkingNode::Straighten => Overlay::drive(-v, lock),
            ParkingNode::Parked => Overlay::drive(0.0, 0.0),
            ParkingNode::PullOut => match self.pull_out {
                PullOutPhase::Swing => Overlay::drive(v, lock),
                PullOutPhase::Return => Overlay::drive(v, -lock),
            },
        }
    }

    pub fn step(&mut self, inputs: &ParkingInputs, cfg: &ParkingConfig) -> ParkingOutput {
        let event = self.observe(inputs, cfg);
        let from = self.node;
        let to = transition(from, event);
        let transition = (to != from).then(|| {
            self.enter(to, inputs);
            self.node = to;
            Transition {
                machine: MACHINE,
                from: from.name(),
                to: to.name(),
                cause: event.cause().to_string(),
            }
        });
        let mut overlay = self.command(cfg);
        let holding = self.node.is_manoeuvre()
            && inputs.ranges.min().is_some_and(|d| d < cfg.collision_stop_m);
        if holding {
            overlay.speed_mps = Some(0.0);
        }
        ParkingOutput {
            overlay,
            hazard: self.node.is_manoeuvre(),
            holding,
            transition,
        }
    }
}
