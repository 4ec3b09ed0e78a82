//! Shape sensing with eccentric fiber Bragg gratings.

pub mod baseline;
pub mod dictionary;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod geometry;
pub mod nn;
pub mod optics;
pub mod tuner;

pub use error::{Error, Result};
