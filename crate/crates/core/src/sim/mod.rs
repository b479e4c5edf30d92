//! Simulation of POCRM trials and estimation of the probability of correct
//! selection.

mod library;
mod pcs;

pub use library::*;
pub use pcs::*;
