//! Scenario-based regret-optimal control for uncertain linear systems.

pub mod benchmark;
pub mod certificates;
pub mod conic;
pub mod error;
pub mod evaluation;
pub mod lifted;
pub mod linalg;
pub mod regret;
pub mod sampling;
pub mod structure;
pub mod synthesis;

pub use error::{Error, Result};
