//! Articulated object pose estimation with pull message-passing
//! nonparametric belief propagation.

pub mod baseline;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod observation;
pub mod oracle;
pub mod pmpnbp;
pub mod potentials;
pub mod random;

pub use error::{ArticError, Result};
