//! Lane geometry from detected lane-marking points.
//!
//! Image points are mapped into a metric bird's-eye view (BEV) with a single
//! pixel-to-meter scale, cleaned of outliers, fitted with a linear or
//! quadratic polynomial per side and merged into a middle line. The BEV frame
//! has its origin at the bottom-centre pixel of the frame, `forward_m` pointing
//! up the image and `lateral_m` positive to the right.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::PathError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaneError {
    #[error("invalid BEV configuration: {0}")]
    InvalidBev(&'static str),
    #[error("lane width must be positive, got {0}")]
    InvalidLaneWidth(f64),
}

/// Continuous image coordinates; `u` grows to the right, `v` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

/// One frame of lane-marking detections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanePoints {
    pub left: Vec<PixelPoint>,
    pub right: Vec<PixelPoint>,
    pub width_px: u32,
    pub height_px: u32,
}

impl LanePoints {
    pub fn empty(width_px: u32, height_px: u32) -> Self {
        Self {
            left: Vec::new(),
            right: Vec::new(),
            width_px,
            height_px,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BevConfig {
    pub px_per_meter: f64,
    /// Forward extent of the transformed region.
    pub roi_length_m: f64,
    /// Full lateral extent, centred on the frame.
    pub roi_width_m: f64,
    /// Rows above this one are never transformed.
    pub horizon_row_px: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        // 640x480 frame, 1.0 m of visible road ahead
        Self::for_road_ahead(1.0, 200.0, 2.4, 480)
    }
}

impl BevConfig {
    /// The transformed region spans 1.5 times the longest stretch of road
    /// ahead that has to be measured.
    pub fn for_road_ahead(max_road_ahead_m: f64, px_per_meter: f64, roi_width_m: f64, height_px: u32) -> Self {
        let roi_length_m = 1.5 * max_road_ahead_m;
        Self {
            px_per_meter,
            roi_length_m,
            roi_width_m,
            horizon_row_px: (height_px as f64 - roi_length_m * px_per_meter).max(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), LaneError> {
        if !(self.px_per_meter.is_finite() && self.px_per_meter > 0.0) {
            return Err(LaneError::InvalidBev("px_per_meter must be positive"));
        }
        if !(self.roi_length_m.is_finite() && self.roi_length_m > 0.0) {
            return Err(LaneError::InvalidBev("roi_length_m must be positive"));
        }
        if !(self.roi_width_m.is_finite() && self.roi_width_m > 0.0) {
            return Err(LaneError::InvalidBev("roi_width_m must be positive"));
        }
        if !self.horizon_row_px.is_finite() {
            return Err(LaneError::InvalidBev("horizon_row_px must be finite"));
        }
        Ok(())
    }

    fn in_roi(&self, p: &BevPoint) -> bool {
        p.forward_m >= 0.0 && p.forward_m <= self.roi_length_m && p.lateral_m.abs() <= 0.5 * self.roi_width_m
    }
}

/// A point on the ground in the BEV frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevPoint {
    pub forward_m: f64,
    pub lateral_m: f64,
}

impl BevPoint {
    pub fn new(forward_m: f64, lateral_m: f64) -> Self {
        Self { forward_m, lateral_m }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BevLanes {
    pub left: Vec<BevPoint>,
    pub right: Vec<BevPoint>,
}

fn pixel_to_bev(p: &PixelPoint, width_px: u32, height_px: u32, cfg: &BevConfig) -> Option<BevPoint> {
    let (w, h) = (width_px as f64, height_px as f64);
    if !(p.u.is_finite() && p.v.is_finite()) || p.u < 0.0 || p.u > w || p.v < 0.0 || p.v > h {
        return None;
    }
    if p.v < cfg.horizon_row_px {
        return None;
    }
    let b = BevPoint {
        forward_m: (h - p.v) / cfg.px_per_meter,
        lateral_m: (p.u - 0.5 * w) / cfg.px_per_meter,
    };
    cfg.in_roi(&b).then_some(b)
}

/// Map detected image points into metric BEV points, dropping anything above
/// the horizon row, outside the frame, or outside the region of interest.
pub fn to_bev(points: &LanePoints, cfg: &BevConfig) -> BevLanes {
    let map = |side: &[PixelPoint]| {
        side.iter()
            .filter_map(|p| pixel_to_bev(p, points.width_px, points.height_px, cfg))
            .collect()
    };
    BevLanes {
        left: map(&points.left),
        right: map(&points.right),
    }
}

/// Inverse of [`to_bev`] for a single point. Returns `None` when the point
/// would fall outside the region of interest or the frame.
pub fn bev_to_pixel(p: &BevPoint, width_px: u32, height_px: u32, cfg: &BevConfig) -> Option<PixelPoint> {
    if !cfg.in_roi(p) {
        return None;
    }
    let px = PixelPoint {
        u: 0.5 * width_px as f64 + p.lateral_m * cfg.px_per_meter,
        v: height_px as f64 - p.forward_m * cfg.px_per_meter,
    };
    let inside = px.u >= 0.0 && px.u <= width_px as f64 && px.v >= cfg.horizon_row_px && px.v <= height_px as f64;
    inside.then_some(px)
}

/// Residual spread below which a set counts as lying exactly on its model.
/// A fifth of a BEV pixel at the default scale: below this, spread comes
/// from the curve not being exactly a polynomial, not from the markings.
const SIGMA_FLOOR_M: f64 = 1e-3;

/// Power sums of a point set about a fixed forward offset, enough to fit a
/// line or quadratic and get its residual sum of squares without revisiting
/// the points. Removing one point is a subtraction.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    s: [f64; 5],
    t: [f64; 3],
    yy: f64,
}

impl Moments {
    fn add(&mut self, u: f64, y: f64, sign: f64) {
        let mut p = 1.0;
        for k in 0..5 {
            self.s[k] += sign * p;
            if k < 3 {
                self.t[k] += sign * p * y;
            }
            p *= u;
        }
        self.n += sign;
        self.yy += sign * y * y;
    }

    /// Line `a + b·u`, or the mean when all points share one offset.
    /// Returns coefficients, residual sum of squares and parameter count.
    fn line(&self) -> ([f64; 3], f64, usize) {
        let [n, s1, s2, ..] = self.s;
        let [t0, t1, _] = self.t;
        let sxx = s2 - s1 * s1 / n;
        if sxx <= f64::EPSILON * s2.max(f64::MIN_POSITIVE) * n {
            let a = t0 / n;
            return ([a, 0.0, 0.0], self.yy - a * t0, 1);
        }
        let b = (t1 - s1 * t0 / n) / sxx;
        let a = (t0 - b * s1) / n;
        ([a, b, 0.0], self.yy - a * t0 - b * t1, 2)
    }

    fn quadratic(&self) -> Option<([f64; 3], f64)> {
        let [n, s1, s2, s3, s4] = self.s;
        let det3 = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| {
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0])
        };
        let rows = [[n, s1, s2], [s1, s2, s3], [s2, s3, s4]];
        let det = det3(rows[0], rows[1], rows[2]);
        if !(det.abs() > 1e-12 * n * s2 * s4) {
            return None;
        }
        // Cramer's rule on the normal equations
        let solve = |k: usize| {
            let mut m = rows;
            for (row, tv) in m.iter_mut().zip(self.t) {
                row[k] = tv;
            }
            det3(m[0], m[1], m[2]) / det
        };
        let c = [solve(0), solve(1), solve(2)];
        let ssr = self.yy - c[0] * self.t[0] - c[1] * self.t[1] - c[2] * self.t[2];
        c.iter().all(|v| v.is_finite()).then_some((c, ssr))
    }

    /// Model with the same degree rule as [`fit_lane`], so curved markings
    /// are not scored against a line. Returns coefficients, residual sum of
    /// squares and parameter count.
    fn provisional(&self) -> ([f64; 3], f64, usize) {
        let (line, line_ssr, params) = self.line();
        if params < 2 || self.n < QUADRATIC_MIN_POINTS as f64 {
            return (line, line_ssr, params);
        }
        let rms = |ssr: f64| (ssr.max(0.0) / self.n).sqrt();
        match self.quadratic() {
            Some((quad, quad_ssr)) if rms(line_ssr) > 1e-12 && rms(quad_ssr) < (1.0 - QUADRATIC_GAIN) * rms(line_ssr) => {
                (quad, quad_ssr, 3)
            }
            _ => (line, line_ssr, params),
        }
    }
}

/// Iteratively drop the point whose lateral residual, measured against a
/// provisional fit to all *other* points, is largest relative to those
/// points' residual standard error, as long as it exceeds `k_sigma` of it.
///
/// Sets with fewer than four points are returned untouched, and at most half
/// of the input is ever removed.
pub fn filter_outliers(points: &[BevPoint], k_sigma: f64) -> Vec<BevPoint> {
    let mut kept = points.to_vec();
    if kept.len() < 4 || !(k_sigma > 0.0) {
        return kept;
    }
    let max_removed = points.len() / 2;
    let mut removed = 0;
    while kept.len() >= 4 && removed < max_removed {
        let centre = kept.iter().map(|p| p.forward_m).sum::<f64>() / kept.len() as f64;
        let mut all = Moments::default();
        for p in &kept {
            all.add(p.forward_m - centre, p.lateral_m, 1.0);
        }
        let mut worst: Option<(usize, f64)> = None;
        for (i, p) in kept.iter().enumerate() {
            let u = p.forward_m - centre;
            let mut others = all;
            others.add(u, p.lateral_m, -1.0);
            let (c, ssr, params) = others.provisional();
            let dof = (kept.len() - 1).saturating_sub(params).max(1) as f64;
            let sigma = (ssr.max(0.0) / dof).sqrt();
            let r = (p.lateral_m - (c[0] + u * (c[1] + u * c[2]))).abs();
            let score = r / sigma.max(SIGMA_FLOOR_M);
            if worst.is_none_or(|(_, s)| score > s) {
                worst = Some((i, score));
            }
        }
        match worst {
            Some((i, score)) if score > k_sigma => {
                kept.remove(i);
                removed += 1;
            }
            _ => break,
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSource {
    Left,
    Right,
    Middle,
}

/// `lateral(s) = c0 + c1·s + c2·s²` over forward distance `s` in the BEV frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePolynomial {
    pub coeffs: [f64; 3],
    pub degree: u8,
    pub valid_from_m: f64,
    pub valid_to_m: f64,
    pub source: LaneSource,
}

impl LanePolynomial {
    /// A line valid over `[from, to]`; mainly for tests and scripted frames.
    pub fn linear(c0: f64, c1: f64, from: f64, to: f64, source: LaneSource) -> Self {
        Self {
            coeffs: [c0, c1, 0.0],
            degree: 1,
            valid_from_m: from,
            valid_to_m: to,
            source,
        }
    }

    pub fn quadratic(c: [f64; 3], from: f64, to: f64, source: LaneSource) -> Self {
        Self {
            coeffs: c,
            degree: if c[2] == 0.0 { 1 } else { 2 },
            valid_from_m: from,
            valid_to_m: to,
            source,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        c0 + s * (c1 + s * c2)
    }

    pub fn slope(&self, s: f64) -> f64 {
        self.coeffs[1] + 2.0 * self.coeffs[2] * s
    }

    pub fn second_derivative(&self) -> f64 {
        2.0 * self.coeffs[2]
    }

    /// Same curve moved laterally by `delta_m` (positive = right).
    pub fn shifted(&self, delta_m: f64, source: LaneSource) -> Self {
        let mut out = *self;
        out.coeffs[0] += delta_m;
        out.source = source;
        out
    }
}

/// Least-squares polynomial coefficients (lowest order first) and RMS residual.
fn poly_fit(points: &[BevPoint], degree: usize) -> Option<([f64; 3], f64)> {
    let n = points.len();
    let cols = degree + 1;
    if n < cols {
        return None;
    }
    let a = DMatrix::from_fn(n, cols, |r, c| points[r].forward_m.powi(c as i32));
    let b = DVector::from_iterator(n, points.iter().map(|p| p.lateral_m));
    let qr = a.clone().qr();
    let r = qr.r();
    let max_diag = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag.max(1e-300)) {
        return None;
    }
    let qtb = qr.q().transpose() * &b;
    let x = r.solve_upper_triangular(&qtb)?;
    let residual = &a * &x - &b;
    let rms = (residual.norm_squared() / n as f64).sqrt();
    let mut coeffs = [0.0; 3];
    coeffs[..cols].copy_from_slice(x.as_slice());
    Some((coeffs, rms))
}

/// Minimum share of the linear RMS residual a quadratic must remove.
pub const QUADRATIC_GAIN: f64 = 0.2;
/// Minimum number of points before a quadratic is considered.
pub const QUADRATIC_MIN_POINTS: usize = 5;

/// Fit one lane marking. Returns `None` ("no lane") for fewer than two points
/// or when all points share one forward coordinate.
///
/// A quadratic is kept only with at least five points and when it cuts the
/// RMS residual of the linear fit by at least 20 %.
pub fn fit_lane(points: &[BevPoint], source: LaneSource) -> Option<LanePolynomial> {
    if points.len() < 2 {
        return None;
    }
    let (lin, lin_rms) = poly_fit(points, 1)?;
    let mut coeffs = lin;
    let mut degree = 1;
    if points.len() >= QUADRATIC_MIN_POINTS {
        if let Some((quad, quad_rms)) = poly_fit(points, 2) {
            if lin_rms > 1e-12 && quad_rms < (1.0 - QUADRATIC_GAIN) * lin_rms {
                coeffs = quad;
                degree = 2;
            }
        }
    }
    let (from, to) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.forward_m), hi.max(p.forward_m))
        });
    Some(LanePolynomial {
        coeffs,
        degree,
        valid_from_m: from,
        valid_to_m: to,
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    BothAveraged,
    LeftShifted,
    RightShifted,
    HeldFromHistory,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BothAveraged => "both_averaged",
            Self::LeftShifted => "left_shifted",
            Self::RightShifted => "right_shifted",
            Self::HeldFromHistory => "held_from_history",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiddleLineState {
    pub current: LanePolynomial,
    /// Frames since the last detection-backed update.
    pub age_frames: u32,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiddleLineConfig {
    pub lane_width_m: f64,
    /// Frames a middle line may be carried without detections.
    pub hold_limit: u32,
}

impl Default for MiddleLineConfig {
    fn default() -> Self {
        Self {
            lane_width_m: 0.70,
            hold_limit: 15,
        }
    }
}

/// No lane has been seen for longer than the hold limit.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("lane lost after {frames_absent} frames without detections")]
pub struct LaneLost {
    pub frames_absent: u32,
}

fn average(left: &LanePolynomial, right: &LanePolynomial) -> LanePolynomial {
    let mut coeffs = [0.0; 3];
    for (c, (l, r)) in coeffs.iter_mut().zip(left.coeffs.iter().zip(right.coeffs.iter())) {
        *c = 0.5 * (l + r);
    }
    LanePolynomial {
        coeffs,
        degree: left.degree.max(right.degree),
        valid_from_m: left.valid_from_m.min(right.valid_from_m),
        valid_to_m: left.valid_to_m.max(right.valid_to_m),
        source: LaneSource::Middle,
    }
}

/// Synthesize the middle line for this frame.
///
/// Both sides present: coefficient-wise average. One side: that side moved
/// half a lane width towards the lane centre. Neither: the previous middle
/// line is carried with its age incremented, until the age exceeds
/// `hold_limit`, at which point [`LaneLost`] is returned.
pub fn middle_line(
    left: Option<&LanePolynomial>,
    right: Option<&LanePolynomial>,
    prev: Option<&MiddleLineState>,
    cfg: &MiddleLineConfig,
) -> Result<MiddleLineState, LaneLost> {
    let half = 0.5 * cfg.lane_width_m;
    let fresh = |current, provenance| MiddleLineState {
        current,
        age_frames: 0,
        provenance,
    };
    match (left, right) {
        (Some(l), Some(r)) => Ok(fresh(average(l, r), Provenance::BothAveraged)),
        (Some(l), None) => Ok(fresh(l.shifted(half, LaneSource::Middle), Provenance::LeftShifted)),
        (None, Some(r)) => Ok(fresh(r.shifted(-half, LaneSource::Middle), Provenance::RightShifted)),
        (None, None) => match prev {
            Some(p) if p.age_frames < cfg.hold_limit => Ok(MiddleLineState {
                current: p.current,
                age_frames: p.age_frames + 1,
                provenance: Provenance::HeldFromHistory,
            }),
            Some(p) => Err(LaneLost {
                frames_absent: p.age_frames + 1,
            }),
            None => Err(LaneLost { frames_absent: 0 }),
        },
    }
}

/// Offset and angle of the middle line at its lowest BEV point (`s = 0`).
///
/// Values are in the BEV frame: positive cross-track means the middle line
/// lies to the right of the frame centre, positive heading means it bends
/// to the right. Controllers expect the opposite sense; see
/// [`PathError::negated`].
pub fn path_error(middle: &LanePolynomial) -> PathError {
    PathError::new(middle.eval(0.0), middle.slope(0.0).atan())
}

/// Unsigned curvature `|x''| / (1 + x'^2)^{3/2}` of the middle line at `s = 0`.
pub fn path_curvature(middle: &LanePolynomial) -> f64 {
    let d1 = middle.slope(0.0);
    let d2 = middle.second_derivative();
    d2.abs() / (1.0 + d1 * d1).powf(1.5)
}

/// Validate a lane width before building a [`MiddleLineConfig`] from user input.
pub fn check_lane_width(lane_width_m: f64) -> Result<(), LaneError> {
    if lane_width_m.is_finite() && lane_width_m > 0.0 {
        Ok(())
    } else {
        Err(LaneError::InvalidLaneWidth(lane_width_m))
    }
}
