//! Pinhole-camera distance estimation from bounding-box heights, plus the
//! affine regression used to correct residual lens distortion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RangeError {
    #[error("{0} must be finite and positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("need at least two samples with distinct estimates, got {0}")]
    DegenerateSamples(usize),
}

fn positive(name: &'static str, v: f64) -> Result<f64, RangeError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(RangeError::NonPositive(name, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub focal_length_mm: f64,
    pub sensor_height_mm: f64,
    pub sensor_height_px: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_length_mm: 3.0,
            sensor_height_mm: 2.76,
            sensor_height_px: 1080.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(focal_length_mm: f64, sensor_height_mm: f64, sensor_height_px: f64) -> Result<Self, RangeError> {
        let c = Self {
            focal_length_mm,
            sensor_height_mm,
            sensor_height_px,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), RangeError> {
        positive("focal_length_mm", self.focal_length_mm)?;
        positive("sensor_height_mm", self.sensor_height_mm)?;
        positive("sensor_height_px", self.sensor_height_px)?;
        Ok(())
    }

    /// Physical size of one (square) pixel.
    pub fn pixel_pitch_mm(&self) -> f64 {
        self.sensor_height_mm / self.sensor_height_px
    }

    /// Focal length expressed in pixels.
    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_mm / self.pixel_pitch_mm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    /// Centre column.
    pub u: f64,
    /// Centre row.
    pub v: f64,
    pub width_px: f64,
    pub height_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub bbox: BoundingBox,
    pub known_real_height_mm: f64,
}

impl Detection {
    pub fn new(class_label: impl Into<String>, bbox: BoundingBox, known_real_height_mm: f64) -> Result<Self, RangeError> {
        positive("bbox height_px", bbox.height_px)?;
        positive("known_real_height_mm", known_real_height_mm)?;
        Ok(Self {
            class_label: class_label.into(),
            bbox,
            known_real_height_mm,
        })
    }
}

/// Size of the object's image on the sensor, in millimetres.
pub fn object_height_on_sensor(det: &Detection, cam: &CameraIntrinsics) -> f64 {
    cam.sensor_height_mm * det.bbox.height_px / cam.sensor_height_px
}

/// Range to the object from its known real height (same unit as the result).
pub fn distance_to_object(det: &Detection, cam: &CameraIntrinsics) -> f64 {
    det.known_real_height_mm * cam.focal_length_mm / object_height_on_sensor(det, cam)
}

pub fn real_object_height(distance_mm: f64, on_sensor_mm: f64, cam: &CameraIntrinsics) -> Result<f64, RangeError> {
    positive("distance_mm", distance_mm)?;
    positive("on_sensor_mm", on_sensor_mm)?;
    Ok(distance_mm * on_sensor_mm / cam.focal_length_mm)
}

/// Affine correction `true ≈ coefficient·estimate + intercept_mm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeCorrection {
    pub coefficient: f64,
    pub intercept_mm: f64,
}

impl Default for RangeCorrection {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RangeCorrection {
    pub const IDENTITY: Self = Self {
        coefficient: 1.0,
        intercept_mm: 0.0,
    };

    pub fn validate(&self) -> Result<(), RangeError> {
        positive("coefficient", self.coefficient)?;
        if !self.intercept_mm.is_finite() {
            return Err(RangeError::NonPositive("finite intercept_mm", self.intercept_mm));
        }
        Ok(())
    }
}

/// Ordinary least squares of true range on estimated range.
pub fn fit_correction(samples: &[(f64, f64)]) -> Result<RangeCorrection, RangeError> {
    let n = samples.len();
    if n < 2 || samples.iter().any(|(e, t)| !e.is_finite() || !t.is_finite()) {
        return Err(RangeError::DegenerateSamples(n));
    }
    let nf = n as f64;
    let mean_e = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let mean_t = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let (mut see, mut set) = (0.0, 0.0);
    for (e, t) in samples {
        see += (e - mean_e) * (e - mean_e);
        set += (e - mean_e) * (t - mean_t);
    }
    let spread = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max)
        - samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    if !(see > 0.0) || spread == 0.0 {
        return Err(RangeError::DegenerateSamples(n));
    }
    let coefficient = set / see;
    Ok(RangeCorrection {
        coefficient,
        intercept_mm: mean_t - coefficient * mean_e,
    })
}

/// Apply the correction, never returning a negative range.
pub fn corrected_distance(raw_mm: f64, corr: &RangeCorrection) -> f64 {
    (corr.coefficient * raw_mm + corr.intercept_mm).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn det(height_px: f64, real_mm: f64) -> Detection {
        Detection::new(
            "park",
            BoundingBox {
                u: 0.0,
                v: 0.0,
                width_px: height_px,
                height_px,
            },
            real_mm,
        )
        .unwrap()
    }

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(3.0, 2.76, 1080.0).unwrap()
    }

    #[test]
    fn on_sensor_examples() {
        assert_abs_diff_eq!(object_height_on_sensor(&det(1080.0, 100.0), &cam()), 2.76, epsilon = 1e-12);
        assert_abs_diff_eq!(object_height_on_sensor(&det(108.0, 100.0), &cam()), 0.276, epsilon = 1e-12);
    }

    #[test]
    fn zero_height_detection_rejected() {
        let bbox = BoundingBox {
            u: 0.0,
            v: 0.0,
            width_px: 1.0,
            height_px: 0.0,
        };
        assert!(Detection::new("x", bbox, 100.0).is_err());
        let bbox = BoundingBox { height_px: 10.0, ..bbox };
        assert!(Detection::new("x", bbox, 0.0).is_err());
    }

    #[test]
    fn distance_examples() {
        // on-sensor height 0.3 mm on a 2.76 mm / 1080 px sensor
        let h_px = 0.3 / 2.76 * 1080.0;
        let d = distance_to_object(&det(h_px, 100.0), &cam());
        assert_relative_eq!(d, 1000.0, max_relative = 1e-12);
        // on-sensor equal to focal length: range equals real height
        let h_px = 3.0 / 2.76 * 1080.0;
        assert_relative_eq!(distance_to_object(&det(h_px, 123.0), &cam()), 123.0, max_relative = 1e-12);
        let near = distance_to_object(&det(200.0, 100.0), &cam());
        let far = distance_to_object(&det(100.0, 100.0), &cam());
        assert_relative_eq!(far, 2.0 * near, max_relative = 1e-15);
    }

    #[test]
    fn real_height_examples() {
        assert_relative_eq!(real_object_height(1000.0, 0.3, &cam()).unwrap(), 100.0, max_relative = 1e-12);
        assert!(real_object_height(1000.0, 0.0, &cam()).is_err());
        let d = det(77.0, 250.0);
        let on = object_height_on_sensor(&d, &cam());
        let back = real_object_height(distance_to_object(&d, &cam()), on, &cam()).unwrap();
        assert_relative_eq!(back, 250.0, max_relative = 1e-9);
    }

    #[test]
    fn fit_examples() {
        let id: Vec<_> = [100.0, 500.0, 900.0].iter().map(|e| (*e, *e)).collect();
        let c = fit_correction(&id).unwrap();
        assert_abs_diff_eq!(c.coefficient, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.intercept_mm, 0.0, epsilon = 1e-9);

        let affine: Vec<_> = [200.0, 450.0, 800.0, 1500.0]
            .iter()
            .map(|e| (*e, 0.9 * e + 50.0))
            .collect();
        let c = fit_correction(&affine).unwrap();
        assert_relative_eq!(c.coefficient, 0.9, max_relative = 1e-9);
        assert_relative_eq!(c.intercept_mm, 50.0, max_relative = 1e-9);

        let two = fit_correction(&[(100.0, 120.0), (300.0, 260.0)]).unwrap();
        assert_abs_diff_eq!(two.coefficient * 100.0 + two.intercept_mm, 120.0, epsilon = 1e-9);
        assert_abs_diff_eq!(two.coefficient * 300.0 + two.intercept_mm, 260.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate() {
        assert!(fit_correction(&[(100.0, 100.0)]).is_err());
        assert!(fit_correction(&[(100.0, 90.0), (100.0, 110.0)]).is_err());
        assert!(fit_correction(&[]).is_err());
    }

    #[test]
    fn corrected_examples() {
        assert_eq!(corrected_distance(812.5, &RangeCorrection::IDENTITY), 812.5);
        let c = RangeCorrection {
            coefficient: 0.9,
            intercept_mm: 50.0,
        };
        assert_abs_diff_eq!(corrected_distance(1000.0, &c), 950.0, epsilon = 1e-12);
        let c = RangeCorrection {
            coefficient: 0.9,
            intercept_mm: -500.0,
        };
        assert_eq!(corrected_distance(100.0, &c), 0.0);
    }
}
