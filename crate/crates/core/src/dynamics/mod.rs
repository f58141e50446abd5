//! Constrained multibody dynamics and time integration.

mod integrate;
mod mass;
mod model;

pub use integrate::*;
pub use mass::*;
pub use model::*;
