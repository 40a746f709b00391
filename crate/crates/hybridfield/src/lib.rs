//! Channel synthesis and sparse estimation for extremely large antenna arrays
//! operating across the near-field / far-field boundary.
//!
//! The crate models a narrowband MIMO link whose base-station aperture is large
//! enough that some propagation paths fall inside the Rayleigh distance (spherical
//! wavefronts) while others remain beyond it (planar wavefronts). It provides:
//!
//! * geometric steering vectors for both regimes and mixed-path channel synthesis
//!   ([`channel`]),
//! * angular (DFT) and polar (angle x distance-ring) analysis dictionaries
//!   ([`codebook`]),
//! * the orthogonal-pilot observation model and its Kronecker sensing matrices
//!   ([`signal`]),
//! * greedy pursuit estimators that split their support budget between the two
//!   dictionaries, with LMS or least-squares coefficient updates, plus a
//!   field-ratio traversal that estimates the far-path fraction ([`estimate`]),
//! * gradient-based off-grid refinement of the recovered path parameters
//!   ([`refine`]),
//! * NMSE / achievable-rate metrics, multiplication-count accounting and the
//!   Monte Carlo sweep driver ([`metrics`]).
//!
//! The crate is `no_std` (with `alloc`); all file formats and CLI plumbing live
//! in the companion `hybridfield-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod channel;
pub mod codebook;
pub mod estimate;
pub mod linalg;
pub mod metrics;
pub mod refine;
pub mod rng;
pub mod signal;

use alloc::string::String;

/// Crate-wide error type. Variants carry a human-readable message naming the
/// offending parameter or operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration or argument value is outside its documented domain.
    InvalidInput(String),
    /// Matrix/vector dimensions do not agree.
    DimensionMismatch(String),
    /// A numeric routine could not complete (singular system, no admissible
    /// candidate column, ...).
    Numerical(String),
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

#[cfg(test)]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
