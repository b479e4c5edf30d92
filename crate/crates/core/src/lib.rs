//! Partial ordering continual reassessment method (POCRM) for dual-agent
//! dose-combination trials, with tools for checking and calibrating its
//! asymptotic consistency.

pub mod consistency;
pub mod crm;
pub mod error;
pub mod grid;
mod numeric;
pub mod pocrm;
pub mod rng;
pub mod scenario;
pub mod selector;
pub mod sim;

pub use error::{Error, Result};
