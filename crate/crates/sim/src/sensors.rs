//! Simulated sensors. These, and the logger, are the only readers of ground
//! truth; everything downstream sees what a real car would see.

use std::f64::consts::{FRAC_PI_2, PI};

use deskcar_core::fsm::{SignClass, SignEvent};
use deskcar_core::grid::{RangeReading, SensorMount};
use deskcar_core::kinematics::{angle_diff, GyroSample, VehicleState};
use deskcar_core::lane::{bev_to_pixel, BevConfig, BevPoint, LanePoints, PixelPoint};
use deskcar_core::range::{
    corrected_distance, distance_to_object, BoundingBox, CameraIntrinsics, Detection, RangeCorrection,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::SensorNoise;
use crate::scenario::{Road, Scenario};

/// Geometry of the lane camera, the sign camera and the range sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRig {
    pub bev: BevConfig,
    pub lane_image_width_px: u32,
    pub lane_image_height_px: u32,
    /// Position of the BEV origin ahead of the rear axle.
    pub bev_origin_forward_m: f64,
    /// Spacing of boundary samples along the road.
    pub lane_sample_step_m: f64,
    pub intrinsics: CameraIntrinsics,
    pub correction: RangeCorrection,
    /// Sign camera position ahead of the rear axle.
    pub camera_forward_m: f64,
    pub camera_hfov_rad: f64,
    pub detection_image_width_px: f64,
    pub max_detection_m: f64,
    pub range_mounts: [SensorMount; 4],
    pub max_range_m: f64,
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            bev: BevConfig::default(),
            lane_image_width_px: 640,
            lane_image_height_px: 480,
            bev_origin_forward_m: 0.5,
            lane_sample_step_m: 0.05,
            intrinsics: CameraIntrinsics::default(),
            correction: RangeCorrection::IDENTITY,
            camera_forward_m: 0.30,
            camera_hfov_rad: 62.2f64.to_radians(),
            detection_image_width_px: 1920.0,
            max_detection_m: 3.0,
            range_mounts: [
                SensorMount { forward_m: 0.32, left_m: 0.0, yaw_rad: 0.0 },
                SensorMount { forward_m: -0.07, left_m: 0.0, yaw_rad: PI },
                SensorMount { forward_m: 0.13, left_m: 0.12, yaw_rad: FRAC_PI_2 },
                SensorMount { forward_m: 0.13, left_m: -0.12, yaw_rad: -FRAC_PI_2 },
            ],
            max_range_m: 1.5,
        }
    }
}

impl SensorRig {
    /// Vehicle-frame point (forward, left) to the BEV frame.
    pub fn vehicle_to_bev(&self, forward_m: f64, left_m: f64) -> BevPoint {
        BevPoint::new(forward_m - self.bev_origin_forward_m, -left_m)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma is finite and positive").sample(rng)
    } else {
        0.0
    }
}

fn dropped(rng: &mut ChaCha8Rng, p: f64) -> bool {
    p > 0.0 && rng.random_bool(p.min(1.0))
}

/// Lane boundary points the camera would report for the true pose.
///
/// Marked boundaries are sampled along the road near the car, moved into the
/// BEV frame and pushed through the inverse of the BEV transform, so the
/// lane pipeline recovers them exactly when noise is off.
pub fn sample_lane_points(
    road: &Road,
    pose: &VehicleState,
    rig: &SensorRig,
    noise: &SensorNoise,
    rng: &mut ChaCha8Rng,
) -> LanePoints {
    let (w, h) = (rig.lane_image_width_px, rig.lane_image_height_px);
    let mut out = LanePoints::empty(w, h);
    let s0 = road.project(pose.x_m, pose.y_m).s_m;
    let reach = rig.bev_origin_forward_m + rig.bev.roi_length_m + 0.5 * rig.bev.roi_width_m;
    let n = (reach / rig.lane_sample_step_m).ceil() as i64;
    for k in -n..=n {
        let s = s0 + k as f64 * rig.lane_sample_step_m;
        if !road.is_marked(s) {
            continue;
        }
        let (left, right) = road.boundaries_at(s);
        for (side, (x, y)) in [(0, left), (1, right)] {
            let (f, l) = pose.to_vehicle(x, y);
            let Some(px) = bev_to_pixel(&rig.vehicle_to_bev(f, l), w, h, &rig.bev) else {
                continue;
            };
            let p = if side == 0 { noise.dropout_left() } else { noise.dropout_right() };
            if dropped(rng, p) {
                continue;
            }
            let px = PixelPoint {
                u: px.u + gaussian(rng, noise.lane_sigma_px),
                v: px.v + gaussian(rng, noise.lane_sigma_px),
            };
            if side == 0 {
                out.left.push(px);
            } else {
                out.right.push(px);
            }
        }
    }
    out
}

/// Exact distance from the sensor to the nearest obstacle along its beam,
/// or `max_range_m` when nothing is hit.
pub fn true_range(scenario: &Scenario, pose: &VehicleState, mount: &SensorMount, max_range_m: f64) -> f64 {
    let (origin, heading) = mount.world_ray(pose);
    let dir = (heading.cos(), heading.sin());
    scenario
        .obstacles
        .iter()
        .filter_map(|r| r.ray_hit(origin, dir))
        .fold(max_range_m, f64::min)
}

/// One time-of-flight reading. Noise is added to hits only: a beam that
/// sees nothing reports its maximum range.
pub fn simulate_range(
    scenario: &Scenario,
    pose: &VehicleState,
    mount: &SensorMount,
    max_range_m: f64,
    noise: &SensorNoise,
    rng: &mut ChaCha8Rng,
) -> RangeReading {
    let exact = true_range(scenario, pose, mount, max_range_m);
    let measured_m = if exact < max_range_m {
        (exact + gaussian(rng, noise.range_sigma_m)).clamp(0.0, max_range_m)
    } else {
        max_range_m
    };
    RangeReading {
        mount: *mount,
        measured_m,
        max_range_m,
        valid: true,
    }
}

/// A detection as the sign camera reports it, with its ground truth kept
/// alongside for checking.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDetection {
    pub event: SignEvent,
    pub detection: Detection,
    pub true_distance_m: f64,
    pub true_bearing_rad: f64,
}

struct Target {
    class: SignClass,
    x_m: f64,
    y_m: f64,
    real_height_mm: f64,
    confidence: f64,
}

/// Signs and traffic lights visible to the sign camera, nearest first.
///
/// Bounding-box heights come from inverting the pinhole relation, so the
/// ranging code recovers the true distance when noise is off.
pub fn simulate_detections(
    scenario: &Scenario,
    pose: &VehicleState,
    t_s: f64,
    rig: &SensorRig,
    noise: &SensorNoise,
    rng: &mut ChaCha8Rng,
) -> Vec<SimDetection> {
    let signs = scenario.signs.iter().map(|s| Target {
        class: s.class,
        x_m: s.x_m,
        y_m: s.y_m,
        real_height_mm: s.real_height_mm,
        confidence: s.confidence,
    });
    let lights = scenario.traffic_lights.iter().map(|l| Target {
        class: match l.state_at(t_s) {
            deskcar_core::fsm::LightState::Red => SignClass::TrafficLightRed,
            deskcar_core::fsm::LightState::Green => SignClass::TrafficLightGreen,
        },
        x_m: l.x_m,
        y_m: l.y_m,
        real_height_mm: l.real_height_mm,
        confidence: l.confidence,
    });
    let cam = &rig.intrinsics;
    let f_px = cam.focal_length_px();
    let cx = 0.5 * rig.detection_image_width_px;
    let mut out = Vec::new();
    for target in signs.chain(lights) {
        let (fwd, left) = pose.to_vehicle(target.x_m, target.y_m);
        let fwd = fwd - rig.camera_forward_m;
        if fwd <= 0.0 {
            continue;
        }
        let bearing = left.atan2(fwd);
        let dist = fwd.hypot(left);
        if bearing.abs() > 0.5 * rig.camera_hfov_rad || dist > rig.max_detection_m {
            continue;
        }
        let exact_px = target.real_height_mm * cam.focal_length_mm * cam.sensor_height_px
            / (cam.sensor_height_mm * dist * 1000.0);
        let height_px = exact_px + gaussian(rng, noise.detection_sigma_px);
        if !(height_px > 0.0) {
            continue;
        }
        let u = cx - f_px * bearing.tan();
        let bbox = BoundingBox {
            u,
            v: 0.5 * cam.sensor_height_px,
            width_px: height_px,
            height_px,
        };
        let Ok(detection) = Detection::new(target.class.label(), bbox, target.real_height_mm) else {
            continue;
        };
        let est_m = corrected_distance(distance_to_object(&detection, cam), &rig.correction) / 1000.0;
        let est_bearing = ((cx - u) / f_px).atan();
        let Ok(event) = SignEvent::new(target.class, est_m.max(0.0), target.confidence) else {
            continue;
        };
        out.push(SimDetection {
            event: event.with_bearing(est_bearing),
            detection,
            true_distance_m: dist,
            true_bearing_rad: bearing,
        });
    }
    out.sort_by(|a, b| a.event.distance_m.total_cmp(&b.event.distance_m));
    out
}

/// Yaw-rate reading for the step that moved the car from `prev` to `next`.
pub fn simulate_gyro(
    prev: &VehicleState,
    next: &VehicleState,
    dt: f64,
    noise: &SensorNoise,
    rng: &mut ChaCha8Rng,
) -> GyroSample {
    let rate = angle_diff(next.theta_rad, prev.theta_rad) / dt;
    GyroSample::rate(rate + noise.gyro_bias_rps + gaussian(rng, noise.gyro_sigma_rps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scenario() -> Scenario {
        crate::scenario::bundled("straight_lane").unwrap()
    }

    #[test]
    fn zero_noise_draws_nothing() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let b = ChaCha8Rng::seed_from_u64(1);
        let s = scenario();
        let pose = VehicleState::new(0.0, 0.0, 0.0);
        sample_lane_points(&s.road(), &pose, &SensorRig::default(), &SensorNoise::default(), &mut a);
        assert_eq!(a, b);
    }

    #[test]
    fn left_dropout_leaves_right_points() {
        let s = scenario();
        let noise = SensorNoise { lane_dropout_left: Some(1.0), ..SensorNoise::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = sample_lane_points(&s.road(), &VehicleState::new(0.0, 0.0, 0.0), &SensorRig::default(), &noise, &mut rng);
        assert!(pts.left.is_empty());
        assert!(pts.right.len() > 10);
    }

    #[test]
    fn range_noise_is_clamped() {
        let mut s = scenario();
        s.obstacles = vec![crate::scenario::Rect { min_x: 0.33, min_y: -0.5, max_x: 0.5, max_y: 0.5 }];
        let rig = SensorRig::default();
        let noise = SensorNoise { range_sigma_m: 5.0, ..SensorNoise::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = VehicleState::new(0.0, 0.0, 0.0);
        for _ in 0..200 {
            let r = simulate_range(&s, &pose, &rig.range_mounts[0], rig.max_range_m, &noise, &mut rng);
            assert!((0.0..=rig.max_range_m).contains(&r.measured_m));
        }
        let rear = simulate_range(&s, &pose, &rig.range_mounts[1], rig.max_range_m, &noise, &mut rng);
        assert_eq!(rear.measured_m, rig.max_range_m);
    }

    #[test]
    fn gyro_reports_true_rate_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = simulate_gyro(
            &VehicleState::new(0.0, 0.0, 3.1),
            &VehicleState::new(0.0, 0.0, -3.1),
            0.01,
            &SensorNoise::default(),
            &mut rng,
        );
        let want = (2.0 * PI - 6.2) / 0.01;
        assert!((g.yaw_rate_rps - want).abs() < 1e-9);
    }
}
