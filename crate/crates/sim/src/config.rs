//! Controller gains and sensor noise, each loadable from a JSON file.

use std::path::Path;

use deskcar_core::control::{PidGains, PurePursuitGains, SpeedPolicy, StanleyGains};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("could not parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Gains {
    pub stanley: StanleyGains,
    pub pid: PidGains,
    pub pure_pursuit: PurePursuitGains,
    pub speed: SpeedPolicy,
}

impl Gains {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let g: Gains = load_json(path)?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: deskcar_core::control::ControlError| ConfigError::Invalid(e.to_string());
        self.stanley.validate().map_err(bad)?;
        self.pid.validate().map_err(bad)?;
        self.pure_pursuit.validate().map_err(bad)?;
        self.speed.validate().map_err(bad)?;
        Ok(())
    }
}

/// Standard deviations and dropout rates of the simulated sensors. All zero
/// by default, which makes every sensor exact.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    pub lane_sigma_px: f64,
    pub lane_dropout: f64,
    /// Per-side overrides of `lane_dropout`.
    pub lane_dropout_left: Option<f64>,
    pub lane_dropout_right: Option<f64>,
    pub range_sigma_m: f64,
    pub gyro_bias_rps: f64,
    pub gyro_sigma_rps: f64,
    pub detection_sigma_px: f64,
}

impl SensorNoise {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let n: SensorNoise = load_json(path)?;
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sigmas = [
            ("lane_sigma_px", self.lane_sigma_px),
            ("range_sigma_m", self.range_sigma_m),
            ("gyro_sigma_rps", self.gyro_sigma_rps),
            ("detection_sigma_px", self.detection_sigma_px),
        ];
        for (name, v) in sigmas {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.gyro_bias_rps.is_finite() {
            return Err(ConfigError::Invalid("gyro_bias_rps must be finite".into()));
        }
        let probs = [
            ("lane_dropout", Some(self.lane_dropout)),
            ("lane_dropout_left", self.lane_dropout_left),
            ("lane_dropout_right", self.lane_dropout_right),
        ];
        for (name, p) in probs {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ConfigError::Invalid(format!("{name} must be in [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn dropout_left(&self) -> f64 {
        self.lane_dropout_left.unwrap_or(self.lane_dropout)
    }

    pub fn dropout_right(&self) -> f64 {
        self.lane_dropout_right.unwrap_or(self.lane_dropout)
    }
}
