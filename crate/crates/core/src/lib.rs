//! Online learning of inverse statics mappings for serial revolute arms.

pub mod direction_sampling;
pub mod error;
pub mod goal_babbling;
pub mod harness;
pub mod learner;
pub mod model;
pub mod sst;
pub mod symmetry;

pub use error::{Error, Result};
