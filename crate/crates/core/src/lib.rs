//! Representation-set optimization for adaptive video streaming.
//!
//! Picks which (video, resolution, bitrate) encodings to produce so that a
//! population of users with heterogeneous displays and throughput gets the
//! highest average satisfaction under storage, count and fairness limits.

pub mod catalog;
pub mod error;
pub mod experiment;
pub mod model;
pub mod population;
pub mod qoe;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod solve;

pub use catalog::{CandidateUniverse, Representation, RepresentationSet, Vendor};
pub use error::{Error, Result};
pub use population::{ThroughputModel, UserProfile};
pub use qoe::{Kbps, Resolution, VideoType};
pub use scalar::Scalar;

/// Satisfaction coefficients in double precision.
pub type SatParams = qoe::SatParams<f64>;
/// Coefficient table in double precision.
pub type SatisfactionTable = qoe::SatisfactionTable<f64>;
