//! Optimal composition of control primitives by free-energy gating.

pub mod cli;
pub mod error;
pub mod gating;
pub mod model;
pub mod nav;
pub mod oracle;
pub mod planner;
pub mod prob;
pub mod sim;
pub mod synthetic;

pub use error::{Error, Result};
