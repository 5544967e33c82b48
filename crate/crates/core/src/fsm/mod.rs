//! Decision layer: sign-triggered manoeuvre state machines and the command
//! overlays they emit on top of the lane-following controller.

pub mod filter;
pub mod intersection;
pub mod parking;
pub mod signs;

use serde::{Deserialize, Serialize};

use crate::kinematics::ControlInput;

pub use filter::{FilterOutcome, StatFilter};
pub use intersection::{IntersectionConfig, IntersectionFsm, IntersectionInputs, IntersectionNode, LightState, TurnKind};
pub use parking::{ParkingConfig, ParkingFsm, ParkingInputs, ParkingNode, SideRanges};
pub use signs::{ActuatorFlags, CrossingConfig, CrossingMonitor, SignClass, SignEvent};

/// Optional overrides for one control step.
///
/// An overlay that sets both speed and steering takes the vehicle over from
/// the lane controller. One that sets only a speed caps the magnitude of the
/// command so far, and one that sets only a steering angle replaces it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overlay {
    pub speed_mps: Option<f64>,
    pub steer_rad: Option<f64>,
}

impl Overlay {
    pub const NONE: Self = Self {
        speed_mps: None,
        steer_rad: None,
    };

    pub fn speed(speed_mps: f64) -> Self {
        Self {
            speed_mps: Some(speed_mps),
            steer_rad: None,
        }
    }

    pub fn drive(speed_mps: f64, steer_rad: f64) -> Self {
        Self {
            speed_mps: Some(speed_mps),
            steer_rad: Some(steer_rad),
        }
    }

    pub fn stop() -> Self {
        Self::speed(0.0)
    }

    pub fn is_takeover(&self) -> bool {
        self.speed_mps.is_some() && self.steer_rad.is_some()
    }
}

/// Apply overlays to the base command in order.
pub fn compose(base: ControlInput, overlays: &[Overlay]) -> ControlInput {
    let mut cmd = base;
    for o in overlays {
        match (o.speed_mps, o.steer_rad) {
            (Some(v), Some(s)) => {
                cmd = ControlInput {
                    speed_mps: v,
                    steer_rad: s,
                }
            }
            (Some(v), None) => {
                let magnitude = cmd.speed_mps.abs().min(v.abs());
                cmd.speed_mps = if magnitude == 0.0 {
                    0.0
                } else {
                    magnitude.copysign(cmd.speed_mps)
                };
            }
            (None, Some(s)) => cmd.steer_rad = s,
            (None, None) => {}
        }
    }
    cmd
}

/// One state change, as recorded in the run's transition log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub machine: &'static str,
    pub from: &'static str,
    pub to: &'static str,
    pub cause: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(v: f64, s: f64) -> ControlInput {
        ControlInput {
            speed_mps: v,
            steer_rad: s,
        }
    }

    #[test]
    fn no_overlays_is_identity() {
        assert_eq!(compose(base(0.5, 0.1), &[]), base(0.5, 0.1));
        assert_eq!(compose(base(0.5, 0.1), &[Overlay::NONE]), base(0.5, 0.1));
    }

    #[test]
    fn speed_is_min_composed() {
        let out = compose(base(0.5, 0.1), &[Overlay::speed(0.3), Overlay::speed(0.4)]);
        assert_eq!(out, base(0.3, 0.1));
        let out = compose(base(0.2, 0.0), &[Overlay::speed(0.3)]);
        assert_eq!(out.speed_mps, 0.2);
        let out = compose(base(0.5, 0.0), &[Overlay::speed(0.3), Overlay::stop()]);
        assert_eq!(out.speed_mps, 0.0);
    }

    #[test]
    fn takeover_then_caps() {
        let out = compose(base(0.5, 0.1), &[Overlay::drive(-0.2, -0.52), Overlay::speed(0.3)]);
        assert_eq!(out, base(-0.2, -0.52));
        let out = compose(base(0.05, 0.1), &[Overlay::drive(-0.2, -0.52)]);
        assert_eq!(out, base(-0.2, -0.52));
        let out = compose(base(0.5, 0.1), &[Overlay::drive(-0.2, -0.52), Overlay::stop()]);
        assert_eq!(out.speed_mps.to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn steer_only_override() {
        let out = compose(base(0.5, 0.1), &[Overlay { speed_mps: None, steer_rad: Some(0.3) }]);
        assert_eq!(out, base(0.5, 0.3));
    }
}
