//! Steering laws (Stanley, PID, Pure Pursuit) and the speed policy.
//!
//! Sign convention for [`PathError`]: positive cross-track error means the
//! vehicle sits to the right of the middle line, positive heading error means
//! the path tangent points to the left of the vehicle heading. Positive steer
//! turns left, so every law below is negative feedback as written.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::normalize_angle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("Stanley denominator v + k_s must be positive (v = {speed}, k_s = {k_s})")]
    StanleyDenominator { speed: f64, k_s: f64 },
    #[error("Pure Pursuit needs a positive speed, got {0}")]
    NonPositiveSpeed(f64),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("unknown controller {0:?} (expected stanley, pid or pure-pursuit)")]
    UnknownController(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathError {
    pub cross_track_m: f64,
    pub heading_err_rad: f64,
}

impl PathError {
    pub fn new(cross_track_m: f64, heading_err_rad: f64) -> Self {
        Self {
            cross_track_m,
            heading_err_rad: normalize_angle(heading_err_rad),
        }
    }

    /// Both components with the opposite sign.
    pub fn negated(&self) -> Self {
        Self::new(-self.cross_track_m, -self.heading_err_rad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StanleyGains {
    pub k_he: f64,
    pub k_ce: f64,
    pub k_s: f64,
}

impl Default for StanleyGains {
    fn default() -> Self {
        Self {
            k_he: 1.0,
            k_ce: 2.5,
            k_s: 0.1,
        }
    }
}

impl StanleyGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let g = [self.k_he, self.k_ce, self.k_s];
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ControlError::InvalidGains("Stanley gains must be finite and >= 0".into()));
        }
        if g.iter().all(|v| *v == 0.0) {
            return Err(ControlError::InvalidGains("Stanley gains are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Anti-windup bound on the accumulated cross-track error.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            k_p: 2.0,
            k_i: 0.05,
            k_d: 1.5,
            integral_limit: 1.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if [self.k_p, self.k_i, self.k_d]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(ControlError::InvalidGains("PID gains must be finite and >= 0".into()));
        }
        if !(self.integral_limit.is_finite() && self.integral_limit > 0.0) {
            return Err(ControlError::InvalidGains("integral limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PurePursuitGains {
    pub k_pp: f64,
}

impl Default for PurePursuitGains {
    fn default() -> Self {
        Self { k_pp: 1.0 }
    }
}

impl PurePursuitGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.k_pp.is_finite() && self.k_pp > 0.0 {
            Ok(())
        } else {
            Err(ControlError::InvalidGains("k_pp must be positive".into()))
        }
    }
}

/// Curvature- and obstacle-aware P speed control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedPolicy {
    pub cruise_mps: f64,
    pub curvature_gain: f64,
    pub obstacle_gain: f64,
    /// Clearance at which the obstacle branch commands zero speed.
    pub obstacle_stop_m: f64,
}

impl Default for SpeedPolicy {
    fn default() -> Self {
        Self {
            cruise_mps: 0.5,
            curvature_gain: 0.5,
            obstacle_gain: 1.0,
            obstacle_stop_m: 0.45,
        }
    }
}

impl SpeedPolicy {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.cruise_mps.is_finite() && self.cruise_mps > 0.0) {
            return Err(ControlError::InvalidGains("cruise speed must be positive".into()));
        }
        if [self.curvature_gain, self.obstacle_gain, self.obstacle_stop_m]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(ControlError::InvalidGains(
                "speed gains and stop distance must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Steering law selected by name on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Stanley,
    Pid,
    PurePursuit,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [Self::Stanley, Self::Pid, Self::PurePursuit];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Stanley => "stanley",
            Self::Pid => "pid",
            Self::PurePursuit => "pure-pursuit",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ControlError::UnknownController(s.to_string()))
    }
}

/// `k_he·HE + atan(k_ce·CE / (v + k_s))`.
pub fn stanley_steer(err: &PathError, v_mps: f64, gains: &StanleyGains) -> Result<f64, ControlError> {
    let denom = v_mps + gains.k_s;
    if !(denom > 0.0) {
        return Err(ControlError::StanleyDenominator {
            speed: v_mps,
            k_s: gains.k_s,
        });
    }
    Ok(gains.k_he * err.heading_err_rad + (gains.k_ce * err.cross_track_m / denom).atan())
}

/// `k_p·CE + k_d·HE + k_i·∫CE`.
///
/// The derivative channel acts on the heading error itself rather than on
/// the rate of change of the cross-track error.
pub fn pid_steer(err: &PathError, integral_ce: f64, gains: &PidGains) -> f64 {
    gains.k_p * err.cross_track_m + gains.k_d * err.heading_err_rad + gains.k_i * integral_ce
}

/// Accumulate `CE·dt` into the integral, saturated at ±`integral_limit`.
pub fn update_integral(integral_ce: f64, ce: f64, dt: f64, gains: &PidGains) -> f64 {
    let limit = gains.integral_limit;
    (integral_ce + ce * dt).clamp(-limit, limit)
}

/// Below this speed the simulator holds the previous Pure Pursuit command.
pub const PURE_PURSUIT_MIN_SPEED: f64 = 0.05;

/// `atan(2·CE·L / (k_pp·v))`.
pub fn pure_pursuit_steer(
    cross_track_m: f64,
    wheelbase_m: f64,
    v_mps: f64,
    gains: &PurePursuitGains,
) -> Result<f64, ControlError> {
    if !(v_mps > 0.0) {
        return Err(ControlError::NonPositiveSpeed(v_mps));
    }
    Ok((2.0 * cross_track_m * wheelbase_m / (gains.k_pp * v_mps)).atan())
}

/// Speed from path curvature, capped by the obstacle branch when a reading
/// exists. The lower of the two always wins.
pub fn speed_command(policy: &SpeedPolicy, path_curvature_per_m: f64, nearest_obstacle_m: Option<f64>) -> f64 {
    let curvature_speed = (policy.cruise_mps - policy.curvature_gain * path_curvature_per_m).max(0.0);
    match nearest_obstacle_m {
        Some(d) => {
            let obstacle_speed =
                (policy.obstacle_gain * (d - policy.obstacle_stop_m)).clamp(0.0, policy.cruise_mps);
            curvature_speed.min(obstacle_speed)
        }
        None => curvature_speed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stanley_examples() {
        let g = StanleyGains::default();
        assert_eq!(stanley_steer(&PathError::new(0.0, 0.0), 0.5, &g).unwrap(), 0.0);
        let g = StanleyGains {
            k_he: 1.0,
            k_ce: 1.0,
            k_s: 0.0,
        };
        let s = stanley_steer(&PathError::new(0.2, 0.1), 1.0, &g).unwrap();
        assert_abs_diff_eq!(s, 0.1 + 0.2f64.atan(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.29740, epsilon = 1e-5);
        let a = stanley_steer(&PathError::new(0.3, 0.0), 0.4, &StanleyGains::default()).unwrap();
        let b = stanley_steer(&PathError::new(-0.3, 0.0), 0.4, &StanleyGains::default()).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn stanley_rejects_zero_denominator() {
        let g = StanleyGains {
            k_he: 1.0,
            k_ce: 1.0,
            k_s: 0.0,
        };
        assert!(matches!(
            stanley_steer(&PathError::new(0.1, 0.0), 0.0, &g),
            Err(ControlError::StanleyDenominator { .. })
        ));
    }

    #[test]
    fn pid_examples() {
        let g = PidGains {
            k_p: 1.0,
            k_i: 0.0,
            k_d: 0.5,
            integral_limit: 1.0,
        };
        assert_eq!(pid_steer(&PathError::default(), 0.0, &g), 0.0);
        assert_abs_diff_eq!(pid_steer(&PathError::new(0.2, 0.1), 0.0, &g), 0.25, epsilon = 1e-12);
        let g = PidGains {
            k_p: 0.0,
            k_i: 0.1,
            k_d: 0.0,
            integral_limit: 2.0,
        };
        assert_abs_diff_eq!(pid_steer(&PathError::default(), 1.0, &g), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn integral_examples() {
        let g = PidGains::default();
        assert_abs_diff_eq!(update_integral(0.0, 0.5, 0.1, &g), 0.05, epsilon = 1e-15);
        assert_eq!(update_integral(1.0, 0.3, 0.1, &g), 1.0);
        assert_eq!(update_integral(-1.0, -0.3, 0.1, &g), -1.0);
        let mut acc = 0.0;
        for k in 0..10 {
            let ce = if k % 2 == 0 { 0.25 } else { -0.25 };
            acc = update_integral(acc, ce, 0.5, &g);
        }
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn pure_pursuit_examples() {
        let g = PurePursuitGains::default();
        assert_eq!(pure_pursuit_steer(0.0, 0.26, 1.0, &g).unwrap(), 0.0);
        let s = pure_pursuit_steer(0.1, 0.26, 1.0, &g).unwrap();
        assert_abs_diff_eq!(s, 0.052f64.atan(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.051_953, epsilon = 1e-6);
        let slow = pure_pursuit_steer(0.1, 0.26, 1.0, &g).unwrap().tan();
        let fast = pure_pursuit_steer(0.1, 0.26, 2.0, &g).unwrap().tan();
        assert_abs_diff_eq!(fast, slow / 2.0, epsilon = 1e-15);
        assert!(pure_pursuit_steer(0.1, 0.26, 0.0, &g).is_err());
        assert!(pure_pursuit_steer(0.1, 0.26, -0.3, &g).is_err());
    }

    #[test]
    fn speed_examples() {
        let p = SpeedPolicy {
            cruise_mps: 0.9,
            curvature_gain: 0.5,
            obstacle_gain: 1.0,
            obstacle_stop_m: 0.3,
        };
        assert_eq!(speed_command(&p, 0.0, None), 0.9);
        assert_abs_diff_eq!(speed_command(&p, 1.0, None), 0.4, epsilon = 1e-12);
        assert_eq!(speed_command(&p, 0.0, Some(0.3)), 0.0);
        assert_eq!(speed_command(&p, 5.0, Some(0.3)), 0.0);
        assert_eq!(speed_command(&p, 10.0, None), 0.0);
        // obstacle far away never exceeds cruise
        assert_eq!(speed_command(&p, 0.0, Some(100.0)), 0.9);
        assert_abs_diff_eq!(speed_command(&p, 0.0, Some(0.5)), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn controller_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("mpc".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn gain_validation() {
        assert!(StanleyGains::default().validate().is_ok());
        assert!(StanleyGains {
            k_he: 0.0,
            k_ce: 0.0,
            k_s: 0.0
        }
        .validate()
        .is_err());
        assert!(PidGains {
            integral_limit: 0.0,
            ..PidGains::default()
        }
        .validate()
        .is_err());
        assert!(PurePursuitGains { k_pp: 0.0 }.validate().is_err());
        assert!(SpeedPolicy::default().validate().is_ok());
    }
}
