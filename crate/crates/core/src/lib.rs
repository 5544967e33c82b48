//! Vehicle model, lateral controllers, lane post-processing, monocular
//! ranging, occupancy mapping and manoeuvre logic for a small autonomous
//! model car.

pub mod control;
pub mod fsm;
pub mod grid;
pub mod kinematics;
pub mod lane;
pub mod range;

pub use control::{ControllerKind, PathError};
pub use kinematics::{ControlInput, VehicleParams, VehicleState};
