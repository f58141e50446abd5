//! Modeling, analysis and tracking control for a reconfigurable robot with
//! four mecanum wheels carried on two actuated legs.
//!
//! Reduced coordinates are `x = [px, py, theta, phi1, phi2]`; actuator
//! commands are four wheel rates (or torques) followed by two joint rates
//! (or torques).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod controllability;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod linalg;
pub mod params;
pub mod state;

pub use error::{ModelError, Result};
pub use kinematics::{forward_map, inverse_map, stack_maps, Frame, KinematicMaps};
pub use params::RobotParams;
pub use state::{ControlInput, InputMode, Pose, RobotState};
