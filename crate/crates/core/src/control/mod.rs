//! Trajectory generation, time scaling, the tracking law and the
//! velocity-limit clamp.

mod law;
mod tracking;
mod trajectory;

pub use law::*;
pub use tracking::*;
pub use trajectory::*;
