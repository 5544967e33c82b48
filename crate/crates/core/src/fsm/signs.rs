//! Traffic-sign events and the simple reactions that need no state machine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Overlay;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignError {
    #[error("unknown sign class {0:?}")]
    UnknownClass(String),
    #[error("sign distance must be finite and non-negative, got {0}")]
    InvalidDistance(f64),
    #[error("confidence must lie in [0, 1], got {0}")]
    InvalidConfidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignClass {
    Park,
    TurnLeft,
    TurnRight,
    Straight,
    Tunnel,
    PedestrianCrossing,
    NoOvertaking,
    TrafficLightRed,
    TrafficLightGreen,
}

impl SignClass {
    pub const ALL: [SignClass; 9] = [
        SignClass::Park,
        SignClass::TurnLeft,
        SignClass::TurnRight,
        SignClass::Straight,
        SignClass::Tunnel,
        SignClass::PedestrianCrossing,
        SignClass::NoOvertaking,
        SignClass::TrafficLightRed,
        SignClass::TrafficLightGreen,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SignClass::Park => "park",
            SignClass::TurnLeft => "turn_left",
            SignClass::TurnRight => "turn_right",
            SignClass::Straight => "straight",
            SignClass::Tunnel => "tunnel",
            SignClass::PedestrianCrossing => "pedestrian_crossing",
            SignClass::NoOvertaking => "no_overtaking",
            SignClass::TrafficLightRed => "traffic_light_red",
            SignClass::TrafficLightGreen => "traffic_light_green",
        }
    }

    pub fn is_traffic_light(&self) -> bool {
        matches!(self, SignClass::TrafficLightRed | SignClass::TrafficLightGreen)
    }

    pub fn is_turn(&self) -> bool {
        matches!(self, SignClass::TurnLeft | SignClass::TurnRight | SignClass::Straight)
    }
}

impl fmt::Display for SignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SignClass {
    type Err = SignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SignClass::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| SignError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignEvent {
    pub class: SignClass,
    pub distance_m: f64,
    pub confidence: f64,
    /// Direction to the sign relative to the vehicle heading, left positive.
    pub bearing_rad: f64,
}

impl SignEvent {
    pub fn new(class: SignClass, distance_m: f64, confidence: f64) -> Result<Self, SignError> {
        if !(distance_m.is_finite() && distance_m >= 0.0) {
            return Err(SignError::InvalidDistance(distance_m));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(SignError::InvalidConfidence(confidence));
        }
        Ok(Self {
            class,
            distance_m,
            confidence,
            bearing_rad: 0.0,
        })
    }

    pub fn with_bearing(mut self, bearing_rad: f64) -> Self {
        self.bearing_rad = bearing_rad;
        self
    }

    /// Distance to the sign measured along the vehicle heading.
    pub fn forward_distance_m(&self) -> f64 {
        self.distance_m * self.bearing_rad.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorFlags {
    pub hazard_lights: bool,
    pub headlights: bool,
    pub overtaking_allowed: bool,
}

impl Default for ActuatorFlags {
    fn default() -> Self {
        Self {
            hazard_lights: false,
            headlights: false,
            overtaking_allowed: true,
        }
    }
}

/// Flag changes caused by a single sign.
///
/// Tunnel and no-overtaking signs come in pairs marking the start and end of
/// a zone, so each occurrence toggles its flag. A pedestrian crossing turns
/// the hazard lights on; [`CrossingMonitor`] turns them off again.
pub fn sign_reactions(event: &SignEvent, flags: ActuatorFlags) -> ActuatorFlags {
    let mut out = flags;
    match event.class {
        SignClass::Tunnel => out.headlights = !flags.headlights,
        SignClass::NoOvertaking => out.overtaking_allowed = !flags.overtaking_allowed,
        SignClass::PedestrianCrossing => out.hazard_lights = true,
        _ => {}
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossingConfig {
    /// Length of road past the sign over which the crossing is active.
    pub crossing_zone_m: f64,
    pub crossing_speed_mps: f64,
}

impl Default for CrossingConfig {
    fn default() -> Self {
        Self {
            crossing_zone_m: 0.8,
            crossing_speed_mps: 0.3,
        }
    }
}

/// Tracks the distance left until a pedestrian crossing has been cleared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CrossingMonitor {
    remaining_m: Option<f64>,
}

impl CrossingMonitor {
    pub fn is_active(&self) -> bool {
        self.remaining_m.is_some()
    }

    pub fn on_sign(&mut self, event: &SignEvent, cfg: &CrossingConfig) {
        if event.class == SignClass::PedestrianCrossing {
            let span = event.forward_distance_m().max(0.0) + cfg.crossing_zone_m;
            self.remaining_m = Some(self.remaining_m.map_or(span, |r| r.max(span)));
        }
    }

    /// Advance by the distance travelled this step and return the overlay.
    pub fn step(&mut self, travelled_m: f64, cfg: &CrossingConfig) -> Overlay {
        match self.remaining_m {
            Some(r) => {
                let left = r - travelled_m.abs();
                self.remaining_m = (left > 0.0).then_some(left);
                Overlay::speed(cfg.crossing_speed_mps)
            }
            None => Overlay::NONE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::compose;
    use crate::kinematics::ControlInput;

    fn ev(class: SignClass, d: f64) -> SignEvent {
        SignEvent::new(class, d, 0.9).unwrap()
    }

    #[test]
    fn tunnel_toggles_headlights() {
        let f = sign_reactions(&ev(SignClass::Tunnel, 1.0), ActuatorFlags::default());
        assert!(f.headlights);
        let f = sign_reactions(&ev(SignClass::Tunnel, 1.0), f);
        assert!(!f.headlights);
    }

    #[test]
    fn no_overtaking_pair() {
        let f = sign_reactions(&ev(SignClass::NoOvertaking, 1.0), ActuatorFlags::default());
        assert!(!f.overtaking_allowed);
        let f = sign_reactions(&ev(SignClass::NoOvertaking, 1.0), f);
        assert!(f.overtaking_allowed);
    }

    #[test]
    fn other_signs_leave_flags() {
        let start = ActuatorFlags::default();
        for class in [SignClass::Park, SignClass::TurnLeft, SignClass::TrafficLightRed] {
            assert_eq!(sign_reactions(&ev(class, 1.0), start), start);
        }
    }

    #[test]
    fn crossing_caps_speed_then_clears() {
        let cfg = CrossingConfig::default();
        let event = ev(SignClass::PedestrianCrossing, 0.5);
        let flags = sign_reactions(&event, ActuatorFlags::default());
        assert!(flags.hazard_lights);
        let mut mon = CrossingMonitor::default();
        mon.on_sign(&event, &cfg);
        let overlay = mon.step(0.005, &cfg);
        let cmd = compose(
            ControlInput {
                speed_mps: 0.5,
                steer_rad: 0.0,
            },
            &[overlay],
        );
        assert_eq!(cmd.speed_mps, 0.3);
        let slow = compose(
            ControlInput {
                speed_mps: 0.2,
                steer_rad: 0.0,
            },
            &[overlay],
        );
        assert_eq!(slow.speed_mps, 0.2);
        for _ in 0..1000 {
            mon.step(0.005, &cfg);
        }
        assert!(!mon.is_active());
        assert_eq!(mon.step(0.005, &cfg), Overlay::NONE);
    }

    #[test]
    fn labels_round_trip() {
        for c in SignClass::ALL {
            assert_eq!(c.label().parse::<SignClass>().unwrap(), c);
        }
        assert!("stop".parse::<SignClass>().is_err());
    }

    #[test]
    fn event_validation() {
        assert!(SignEvent::new(SignClass::Park, -0.1, 0.5).is_err());
        assert!(SignEvent::new(SignClass::Park, 1.0, 1.5).is_err());
        assert!(SignEvent::new(SignClass::Park, 0.0, 0.0).is_ok());
    }
}
