//! Closed-loop run: sensors, lane pipeline, controller, decision layer,
//! plant, localization and mapping, once per step.

use deskcar_core::control::{
    pid_steer, pure_pursuit_steer, speed_command, stanley_steer, update_integral,
    ControllerKind, PathError, PURE_PURSUIT_MIN_SPEED,
};
use deskcar_core::fsm::signs::sign_reactions;
use deskcar_core::fsm::{
    compose, ActuatorFlags, CrossingConfig, CrossingMonitor, IntersectionConfig, IntersectionFsm,
    IntersectionInputs, IntersectionNode, LightState, ParkingConfig, ParkingFsm, ParkingInputs, ParkingNode,
    SideRanges, SignClass, SignEvent, StatFilter, TurnKind,
};
use deskcar_core::grid::{GridMap, RangeReading};
use deskcar_core::kinematics::{
    clamp_input, localize, normalize_angle, step, ControlInput, VehicleParams, VehicleState,
};
use deskcar_core::lane::{
    filter_outliers, fit_lane, middle_line, path_curvature, path_error, to_bev, LaneSource, MiddleLineConfig,
    MiddleLineState, Provenance,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Gains, SensorNoise};
use crate::scenario::{Rect, Road, Scenario};
use crate::sensors::{sample_lane_points, simulate_detections, simulate_gyro, simulate_range, SensorRig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("plant integration failed at step {step}: {source}")]
    Plant {
        step: u64,
        source: deskcar_core::kinematics::KinematicsError,
    },
}

/// Everything besides the scenario that shapes a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub controller: ControllerKind,
    pub gains: Gains,
    pub noise: SensorNoise,
    pub dt_s: Option<f64>,
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub rig: SensorRig,
    pub lane: MiddleLineConfig,
    /// Weight of the gyro heading in the localization blend.
    pub fusion_weight: f64,
    /// Outlier gate on lane points, in residual standard deviations.
    pub lane_outlier_k: f64,
    /// A boundary fit must cover at least this much road ahead. Markings
    /// seen nearly side-on, such as a crossing lane, fall short of it.
    pub lane_min_span_m: f64,
    /// Sign detections are produced every this many steps.
    pub detection_period_steps: u64,
    /// Signs closer than this trigger flag reactions.
    pub sign_trigger_m: f64,
    /// A reacted-to sign class is re-armed after this much travel without
    /// seeing it.
    pub sign_rearm_m: f64,
    /// Full angular width of the sector searched for obstacles ahead.
    pub obstacle_sector_rad: f64,
    pub filter_window: usize,
    pub filter_k: f64,
    pub crossing: CrossingConfig,
}

impl RunConfig {
    pub fn new(controller: ControllerKind) -> Self {
        Self {
            controller,
            gains: Gains::default(),
            noise: SensorNoise::default(),
            dt_s: None,
            duration_s: None,
            seed: None,
            rig: SensorRig::default(),
            lane: MiddleLineConfig::default(),
            fusion_weight: 0.98,
            lane_outlier_k: 2.0,
            lane_min_span_m: 0.3,
            detection_period_steps: 5,
            sign_trigger_m: 1.0,
            sign_rearm_m: 1.0,
            obstacle_sector_rad: 30f64.to_radians(),
            filter_window: 8,
            filter_k: 2.0,
            crossing: CrossingConfig::default(),
        }
    }
}

/// One row of the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub t_s: f64,
    pub truth: VehicleState,
    pub estimate: VehicleState,
    /// Controller-frame errors: positive cross-track when the car is right
    /// of the middle line.
    pub ce_m: f64,
    pub he_rad: f64,
    pub steer_cmd_rad: f64,
    pub speed_cmd_mps: f64,
    pub controller: ControllerKind,
    pub parking_node: ParkingNode,
    pub intersection_node: IntersectionNode,
    pub hazard: bool,
    pub headlights: bool,
    pub nearest_obstacle_m: Option<f64>,
    pub lane: Option<Provenance>,
    pub filtered_light: Option<LightState>,
    pub gyro_heading_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub step: u64,
    pub t_s: f64,
    pub machine: &'static str,
    pub from: &'static str,
    pub to: &'static str,
    pub cause: String,
}

/// Heading change measured by the gyro when a turn finished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnResult {
    pub step: u64,
    pub kind: TurnKind,
    pub heading_delta_rad: f64,
    pub target_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Collision { step: u64, obstacle: usize },
    RoadExit { step: u64, reason: String },
}

impl Outcome {
    pub fn is_failure(&self) -> bool {
        !matches!(self, Outcome::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub dt_s: f64,
    pub records: Vec<StepRecord>,
    pub transitions: Vec<TransitionRecord>,
    pub turns: Vec<TurnResult>,
    pub outcome: Outcome,
    pub grid: GridMap,
}

impl RunLog {
    pub fn collisions(&self) -> usize {
        usize::from(matches!(self.outcome, Outcome::Collision { .. }))
    }
}

/// Corners of the car body for a rear-axle pose.
pub fn footprint(pose: &VehicleState, p: &VehicleParams) -> [(f64, f64); 4] {
    let (back, front, half) = (-p.rear_overhang_m(), p.front_extent_m(), 0.5 * p.overall_width_m);
    [
        pose.to_world(back, -half),
        pose.to_world(front, -half),
        pose.to_world(front, half),
        pose.to_world(back, half),
    ]
}

fn project(points: &[(f64, f64)], axis: (f64, f64)) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.0 * axis.0 + p.1 * axis.1;
        (lo.min(d), hi.max(d))
    })
}

/// Separating-axis test between the car body and an obstacle rectangle.
pub fn overlaps(body: &[(f64, f64); 4], rect: &Rect) -> bool {
    let corners = rect.corners();
    let edge = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0, b.1 - a.1);
    let axes = [(1.0, 0.0), (0.0, 1.0), edge(body[0], body[1]), edge(body[1], body[2])];
    axes.iter().all(|&axis| {
        let (a_lo, a_hi) = project(body, axis);
        let (b_lo, b_hi) = project(&corners, axis);
        a_lo <= b_hi && b_lo <= a_hi
    })
}

struct LanePipeline {
    state: Option<MiddleLineState>,
}

struct LaneOutput {
    /// Controller-frame error of a fresh or held middle line.
    error: Option<PathError>,
    curvature: f64,
    provenance: Option<Provenance>,
    fresh: bool,
}

impl LanePipeline {
    fn update(&mut self, points: &deskcar_core::lane::LanePoints, cfg: &RunConfig) -> LaneOutput {
        let bev = to_bev(points, &cfg.rig.bev);
        let fit = |pts: &[_], side| {
            fit_lane(&filter_outliers(pts, cfg.lane_outlier_k), side)
                .filter(|p| p.valid_to_m - p.valid_from_m >= cfg.lane_min_span_m)
        };
        let left = fit(&bev.left, LaneSource::Left);
        let right = fit(&bev.right, LaneSource::Right);
        match middle_line(left.as_ref(), right.as_ref(), self.state.as_ref(), &cfg.lane) {
            Ok(m) => {
                let err = path_error(&m.current).negated();
                let out = LaneOutput {
                    error: (err.cross_track_m.is_finite() && err.heading_err_rad.is_finite()).then_some(err),
                    curvature: path_curvature(&m.current),
                    provenance: Some(m.provenance),
                    fresh: m.age_frames == 0,
                };
                self.state = Some(m);
                out
            }
            Err(_) => {
                self.state = None;
                LaneOutput {
                    error: None,
                    curvature: 0.0,
                    provenance: None,
                    fresh: false,
                }
            }
        }
    }
}

/// Gate and latch for one sign class.
struct SignTrack {
    filter: StatFilter,
    latched: bool,
    unseen_m: f64,
}

struct DecisionLayer {
    tracks: std::collections::BTreeMap<SignClass, SignTrack>,
    light_filter: StatFilter,
    light: Option<LightState>,
    flags: ActuatorFlags,
    crossing: CrossingMonitor,
}

impl DecisionLayer {
    fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let filter = || {
            StatFilter::new(cfg.filter_window, cfg.filter_k).map_err(|e| RunError::Config(e.to_string()))
        };
        let mut tracks = std::collections::BTreeMap::new();
        for class in SignClass::ALL {
            tracks.insert(
                class,
                SignTrack {
                    filter: filter()?,
                    latched: false,
                    unseen_m: 0.0,
                },
            );
        }
        Ok(Self {
            tracks,
            light_filter: filter()?,
            light: None,
            flags: ActuatorFlags::default(),
            crossing: CrossingMonitor::default(),
        })
    }

    /// Gate this frame's detections and apply flag reactions. Returns the
    /// accepted events, nearest first.
    fn observe(&mut self, events: &[SignEvent], travelled_m: f64, cfg: &RunConfig) -> Vec<SignEvent> {
        for track in self.tracks.values_mut() {
            track.unseen_m += travelled_m.abs();
            if track.latched && track.unseen_m >= cfg.sign_rearm_m {
                track.latched = false;
            }
        }
        let mut accepted = Vec::new();
        let mut light_seen = false;
        for ev in events {
            if ev.class.is_traffic_light() {
                // the nearest light decides
                if !light_seen {
                    light_seen = true;
                    let sample = if ev.class == SignClass::TrafficLightRed {
                        LightState::Red.as_sample()
                    } else {
                        LightState::Green.as_sample()
                    };
                    let out = self.light_filter.filter_sample(sample);
                    self.light = Some(LightState::from_filtered(out.value));
                }
                continue;
            }
            let track = self.tracks.get_mut(&ev.class).expect("every class is tracked");
            if !track.filter.filter_sample(ev.distance_m).accepted {
                continue;
            }
            track.unseen_m = 0.0;
            accepted.push(*ev);
            if ev.distance_m <= cfg.sign_trigger_m && !track.latched {
                if matches!(
                    ev.class,
                    SignClass::Tunnel | SignClass::NoOvertaking | SignClass::PedestrianCrossing
                ) {
                    track.latched = true;
                    self.flags = sign_reactions(ev, self.flags);
                    self.crossing.on_sign(ev, &cfg.crossing);
                }
            }
        }
        accepted
    }
}

/// Simulate one scenario in closed loop.
pub fn simulate(scenario: &Scenario, cfg: &RunConfig) -> Result<RunLog, RunError> {
    let dt = cfg.dt_s.unwrap_or(scenario.dt_s);
    let duration = cfg.duration_s.unwrap_or(scenario.duration_s);
    if !(dt.is_finite() && dt > 0.0) || !(duration.is_finite() && duration > 0.0) {
        return Err(RunError::Config("dt and duration must be positive".into()));
    }
    if cfg.detection_period_steps == 0 {
        return Err(RunError::Config("detection period must be at least one step".into()));
    }
    cfg.gains.validate().map_err(|e| RunError::Config(e.to_string()))?;
    cfg.noise.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let seed = cfg.seed.unwrap_or(scenario.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = scenario.vehicle;
    let road: Road = scenario.road();
    let steps = (duration / dt).round().max(1.0) as u64;

    let mut grid = GridMap::new(scenario.grid_spec()).map_err(|e| RunError::Config(e.to_string()))?;
    let parking_cfg = ParkingConfig::for_vehicle(&params);
    let intersection_cfg = IntersectionConfig::for_vehicle(&params);
    let mut parking = ParkingFsm::default();
    let mut intersection = IntersectionFsm::default();
    let mut decisions = DecisionLayer::new(cfg)?;
    let mut lane = LanePipeline { state: None };

    let mut truth: VehicleState = scenario.initial_state.into();
    let mut estimate = truth;
    let mut gyro_heading = truth.theta_rad;
    let mut integral = 0.0;
    let mut last_error = PathError::default();
    let mut prev_cmd = ControlInput::new(0.0, 0.0);

    let mut records = Vec::with_capacity(steps as usize);
    let mut transitions = Vec::new();
    let mut turns = Vec::new();
    let mut outcome = Outcome::Completed;

    for k in 0..steps {
        let t = k as f64 * dt;
        let travelled = prev_cmd.speed_mps * dt;

        // sense
        let points = sample_lane_points(&road, &truth, &cfg.rig, &cfg.noise, &mut rng);
        let readings: Vec<RangeReading> = cfg
            .rig
            .range_mounts
            .iter()
            .map(|m| simulate_range(scenario, &truth, m, cfg.rig.max_range_m, &cfg.noise, &mut rng))
            .collect();
        let detections = if k % cfg.detection_period_steps == 0 {
            simulate_detections(scenario, &truth, t, &cfg.rig, &cfg.noise, &mut rng)
        } else {
            Vec::new()
        };

        // map and perceive
        for r in &readings {
            grid.integrate_reading(&estimate, r);
        }
        let nearest = grid.nearest_obstacle(&estimate, cfg.obstacle_sector_rad);
        let lane_out = lane.update(&points, cfg);
        if let Some(e) = lane_out.error {
            last_error = e;
        }
        let events: Vec<SignEvent> = detections.iter().map(|d| d.event).collect();
        let accepted = decisions.observe(&events, travelled, cfg);

        // decide
        let range_of = |i: usize| readings.get(i).filter(|r| r.is_usable()).map(|r| r.measured_m);
        let park_sign_m = accepted
            .iter()
            .find(|e| e.class == SignClass::Park)
            .map(|e| e.distance_m);
        let p_out = parking.step(
            &ParkingInputs {
                park_sign_m,
                ranges: SideRanges {
                    front_m: range_of(0),
                    rear_m: range_of(1),
                    left_m: range_of(2),
                    right_m: range_of(3),
                },
                heading_rad: estimate.theta_rad,
                lane_heading_rad: lane_out
                    .error
                    .filter(|_| lane_out.fresh)
                    .map(|e| normalize_angle(estimate.theta_rad + e.heading_err_rad)),
                travelled_m: travelled,
                dt_s: dt,
            },
            &parking_cfg,
        );
        let turn_signs: Vec<SignEvent> = accepted.iter().filter(|e| e.class.is_turn()).copied().collect();
        let node_before = intersection.node();
        let i_out = intersection.step(
            &IntersectionInputs {
                turn_signs: &turn_signs,
                light: decisions.light,
                gyro_heading_rad: gyro_heading,
                path_error: lane_out.error.filter(|_| lane_out.fresh),
                travelled_m: travelled,
            },
            &intersection_cfg,
        );
        if let IntersectionNode::ExecuteTurn(kind) = node_before {
            if intersection.node() == IntersectionNode::Exit {
                turns.push(TurnResult {
                    step: k,
                    kind,
                    heading_delta_rad: intersection.heading_delta_rad(gyro_heading),
                    target_rad: kind.target_delta_rad(),
                });
            }
        }
        let crossing_overlay = decisions.crossing.step(travelled, &cfg.crossing);
        if !decisions.crossing.is_active() {
            decisions.flags.hazard_lights = false;
        }
        for tr in p_out.transition.iter().chain(i_out.transitions.iter()) {
            transitions.push(TransitionRecord {
                step: k,
                t_s: t,
                machine: tr.machine,
                from: tr.from,
                to: tr.to,
                cause: tr.cause.clone(),
            });
        }
        let overlays = [p_out.overlay, i_out.overlay, crossing_overlay];
        let takeover = overlays.iter().any(|o| o.is_takeover());

        // lane control
        let curvature = if lane_out.error.is_some() { lane_out.curvature } else { 0.0 };
        let base_speed = speed_command(&cfg.gains.speed, curvature, nearest);
        let v_meas = prev_cmd.speed_mps.max(0.0);
        let steer = match lane_out.error {
            None => prev_cmd.steer_rad,
            Some(e) => match cfg.controller {
                ControllerKind::Stanley => {
                    stanley_steer(&e, v_meas, &cfg.gains.stanley).unwrap_or(prev_cmd.steer_rad)
                }
                ControllerKind::Pid => {
                    if !takeover {
                        integral = update_integral(integral, e.cross_track_m, dt, &cfg.gains.pid);
                    }
                    pid_steer(&e, integral, &cfg.gains.pid)
                }
                ControllerKind::PurePursuit => {
                    if v_meas < PURE_PURSUIT_MIN_SPEED {
                        prev_cmd.steer_rad
                    } else {
                        pure_pursuit_steer(e.cross_track_m, params.wheelbase_m, v_meas, &cfg.gains.pure_pursuit)
                            .unwrap_or(prev_cmd.steer_rad)
                    }
                }
            },
        };
        let cmd = clamp_input(&compose(ControlInput::new(base_speed, steer), &overlays), &params);

        records.push(StepRecord {
            step: k,
            t_s: t,
            truth,
            estimate,
            ce_m: last_error.cross_track_m,
            he_rad: last_error.heading_err_rad,
            steer_cmd_rad: cmd.steer_rad,
            speed_cmd_mps: cmd.speed_mps,
            controller: cfg.controller,
            parking_node: parking.node(),
            intersection_node: intersection.node(),
            hazard: p_out.hazard || decisions.flags.hazard_lights,
            headlights: decisions.flags.headlights,
            nearest_obstacle_m: nearest,
            lane: lane_out.provenance,
            filtered_light: decisions.light,
            gyro_heading_rad: gyro_heading,
        });

        // act
        let next = step(&truth, &cmd, &params, dt).map_err(|source| RunError::Plant { step: k, source })?;
        let gyro = simulate_gyro(&truth, &next, dt, &cfg.noise, &mut rng);
        estimate = localize(&estimate, &cmd, &gyro, &params, dt, cfg.fusion_weight)
            .map_err(|source| RunError::Plant { step: k, source })?;
        gyro_heading = normalize_angle(gyro_heading + gyro.yaw_rate_rps * dt);
        truth = next;
        prev_cmd = cmd;

        // referee
        let body = footprint(&truth, &params);
        if let Some(i) = scenario.obstacles.iter().position(|r| overlaps(&body, r)) {
            outcome = Outcome::Collision { step: k, obstacle: i };
            break;
        }
        let proj = road.project(truth.x_m, truth.y_m);
        if proj.beyond_end_m > 0.0 {
            outcome = Outcome::RoadExit {
                step: k,
                reason: "end of road".into(),
            };
            break;
        }
        if proj.lateral_m.abs() > road.lane_width_m && !scenario.in_parking_bay(truth.x_m, truth.y_m) {
            outcome = Outcome::RoadExit {
                step: k,
                reason: format!("{:.3} m off the centreline", proj.lateral_m),
            };
            break;
        }
    }

    Ok(RunLog {
        scenario: scenario.name.clone(),
        controller: cfg.controller,
        seed,
        dt_s: dt,
        records,
        transitions,
        turns,
        outcome,
        grid,
    })
}
