//! Deterministic closed-loop simulator for the deskcar stack: scenarios,
//! simulated sensors, the run loop, and its logs and plots.

pub mod config;
pub mod log;
pub mod runner;
pub mod scenario;
pub mod sensors;
pub mod svg;
pub mod tools;

pub use config::{Gains, SensorNoise};
pub use runner::{simulate, Outcome, RunConfig, RunLog, StepRecord};
pub use scenario::Scenario;
