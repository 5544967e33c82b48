//! Rear-axle kinematic bicycle model and dead-reckoning localization.
//!
//! The plant integrates
//!
//! ```text
//! x'     = v cos θ
//! y'     = v sin θ
//! θ'     = v tan δ / L
//! ```
//!
//! with forward Euler. The same update drives the localization estimate, whose
//! heading is a complementary blend of the kinematic prediction and an
//! integrated gyro.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("time step must be finite and positive, got {0}")]
    InvalidDt(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("fusion weight must lie in [0, 1], got {0}")]
    InvalidFusionWeight(f64),
}

/// Wrap an angle into `(-π, π]`.
///
/// Angles already inside the interval are returned bit-for-bit unchanged.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut wrapped = angle % TAU;
    if wrapped <= -PI {
        wrapped += TAU;
    } else if wrapped > PI {
        wrapped -= TAU;
    }
    wrapped
}

/// Signed shortest rotation taking `from` onto `to`, in `(-π, π]`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    normalize_angle(to - from)
}

/// Physical description of the car.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Distance between front and rear axles.
    pub wheelbase_m: f64,
    pub max_speed_mps: f64,
    /// Symmetric steering limit.
    pub max_steer_rad: f64,
    pub overall_length_m: f64,
    pub overall_width_m: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase_m: 0.26,
            max_speed_mps: 0.9,
            max_steer_rad: 0.52,
            overall_length_m: 0.397,
            overall_width_m: 0.241,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let fields = [
            self.wheelbase_m,
            self.max_speed_mps,
            self.max_steer_rad,
            self.overall_length_m,
            self.overall_width_m,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite("vehicle parameters"));
        }
        if self.wheelbase_m <= 0.0 {
            return Err(KinematicsError::InvalidParams("wheelbase must be positive".into()));
        }
        if self.max_speed_mps <= 0.0 {
            return Err(KinematicsError::InvalidParams("max speed must be positive".into()));
        }
        if !(self.max_steer_rad > 0.0 && self.max_steer_rad < PI / 2.0) {
            return Err(KinematicsError::InvalidParams(
                "max steer must lie in (0, π/2)".into(),
            ));
        }
        if self.overall_width_m <= 0.0 {
            return Err(KinematicsError::InvalidParams("width must be positive".into()));
        }
        if self.wheelbase_m >= self.overall_length_m {
            return Err(KinematicsError::InvalidParams(
                "wheelbase must be shorter than the body".into(),
            ));
        }
        Ok(())
    }

    /// Body overhang behind the rear axle; the body is centred on the wheelbase.
    pub fn rear_overhang_m(&self) -> f64 {
        0.5 * (self.overall_length_m - self.wheelbase_m)
    }

    /// Body extent in front of the rear axle.
    pub fn front_extent_m(&self) -> f64 {
        self.overall_length_m - self.rear_overhang_m()
    }
}

/// Rear-axle pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
}

impl VehicleState {
    pub fn new(x_m: f64, y_m: f64, theta_rad: f64) -> Self {
        Self {
            x_m,
            y_m,
            theta_rad: normalize_angle(theta_rad),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x_m.is_finite() && self.y_m.is_finite() && self.theta_rad.is_finite()
    }

    /// Map a point from the vehicle frame (x forward, y left) to the world.
    pub fn to_world(&self, forward_m: f64, left_m: f64) -> (f64, f64) {
        let (s, c) = self.theta_rad.sin_cos();
        (
            self.x_m + c * forward_m - s * left_m,
            self.y_m + s * forward_m + c * left_m,
        )
    }

    /// Map a world point into the vehicle frame, returning `(forward, left)`.
    pub fn to_vehicle(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        let (s, c) = self.theta_rad.sin_cos();
        let dx = x_m - self.x_m;
        let dy = y_m - self.y_m;
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub speed_mps: f64,
    /// Positive steers left.
    pub steer_rad: f64,
}

impl ControlInput {
    pub fn new(speed_mps: f64, steer_rad: f64) -> Self {
        Self {
            speed_mps,
            steer_rad,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.speed_mps.is_finite() && self.steer_rad.is_finite()
    }
}

/// One IMU reading: a yaw rate and, when the IMU provides one, an absolute heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GyroSample {
    pub yaw_rate_rps: f64,
    pub heading_rad: Option<f64>,
}

impl GyroSample {
    pub fn rate(yaw_rate_rps: f64) -> Self {
        Self {
            yaw_rate_rps,
            heading_rad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw_rate_rps.is_finite() && self.heading_rad.map_or(true, f64::is_finite)
    }
}

fn check_dt(dt: f64) -> Result<(), KinematicsError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(KinematicsError::InvalidDt(dt))
    }
}

/// Heading rate implied by speed and steering angle.
pub fn yaw_rate(input: &ControlInput, params: &VehicleParams) -> f64 {
    input.speed_mps * input.steer_rad.tan() / params.wheelbase_m
}

/// Advance the plant by one forward-Euler step.
pub fn step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, KinematicsError> {
    check_dt(dt)?;
    if !state.is_finite() {
        return Err(KinematicsError::NonFinite("vehicle state"));
    }
    if !input.is_finite() {
        return Err(KinematicsError::NonFinite("control input"));
    }
    let v = input.speed_mps;
    let (sin_t, cos_t) = state.theta_rad.sin_cos();
    Ok(VehicleState {
        x_m: state.x_m + v * cos_t * dt,
        y_m: state.y_m + v * sin_t * dt,
        theta_rad: normalize_angle(state.theta_rad + yaw_rate(input, params) * dt),
    })
}

/// Steady-state turning radius of the rear axle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TurningRadius {
    Straight,
    Radius(f64),
}

/// Steering angles smaller than this are treated as driving straight.
pub const STRAIGHT_STEER_EPS: f64 = 1e-12;

pub fn turning_radius(steer_rad: f64, params: &VehicleParams) -> TurningRadius {
    if steer_rad.abs() < STRAIGHT_STEER_EPS {
        TurningRadius::Straight
    } else {
        TurningRadius::Radius(params.wheelbase_m / steer_rad.abs().tan())
    }
}

/// Saturate a raw command to the vehicle's speed and steering limits.
pub fn clamp_input(raw: &ControlInput, params: &VehicleParams) -> ControlInput {
    ControlInput {
        speed_mps: raw
            .speed_mps
            .clamp(-params.max_speed_mps, params.max_speed_mps),
        steer_rad: raw
            .steer_rad
            .clamp(-params.max_steer_rad, params.max_steer_rad),
    }
}

/// Dead-reckoning update of the pose estimate.
///
/// Position moves along the previous estimated heading exactly as in [`step`].
/// The new heading blends the gyro-integrated heading (weight `fusion_weight`)
/// with the kinematic prediction on the circle. A non-finite gyro sample
/// falls back to the kinematic heading for this step.
pub fn localize(
    prev_estimate: &VehicleState,
    input: &ControlInput,
    gyro: &GyroSample,
    params: &VehicleParams,
    dt: f64,
    fusion_weight: f64,
) -> Result<VehicleState, KinematicsError> {
    if !(0.0..=1.0).contains(&fusion_weight) {
        return Err(KinematicsError::InvalidFusionWeight(fusion_weight));
    }
    let predicted = step(prev_estimate, input, params, dt)?;
    if !gyro.is_finite() {
        return Ok(predicted);
    }
    let gyro_heading = match gyro.heading_rad {
        Some(h) => normalize_angle(h),
        None => normalize_angle(prev_estimate.theta_rad + gyro.yaw_rate_rps * dt),
    };
    let correction = angle_diff(gyro_heading, predicted.theta_rad);
    Ok(VehicleState {
        theta_rad: normalize_angle(predicted.theta_rad + fusion_weight * correction),
        ..predicted
    })
}
