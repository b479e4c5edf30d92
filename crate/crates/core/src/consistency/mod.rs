//! Asymptotic consistency of POCRM for a skeleton, a set of orderings and
//! a true toxicity scenario.

mod amend;
mod calibrate;
mod check;
mod converged;
mod labels;

pub use amend::*;
pub use calibrate::*;
pub use check::*;
pub use converged::*;
pub use labels::*;
