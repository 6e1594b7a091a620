//! State-of-charge estimation workbench for a second-order equivalent
//! circuit cell model.
//!
//! The crate bundles the cell model and simulator ([`model`]),
//! observability checks ([`observability`]), four output-feedback observers
//! with pole-placement design ([`observers`]), a square-root cubature Kalman
//! filter baseline ([`srckf`]), offline identification
//! ([`characterization`]) and the scenario harness that compares them
//! ([`harness`]).

pub mod characterization;
pub mod error;
pub mod harness;
pub mod loadfile;
pub mod manifest;
pub mod model;
pub mod observability;
pub mod observers;
pub mod reference;
pub mod srckf;

pub use error::{Error, Result};
pub use loadfile::{Loadfile, LoadfileSample};
