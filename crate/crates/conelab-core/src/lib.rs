//! Perelman's entropy functionals on rotationally symmetric links, the
//! Riemannian cones over them, and the warped-product smoothings that
//! interpolate between a cap and a cone.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is pure
//! computation; file formats, the command line and parallel scans live in
//! the `conelab` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cones;
pub mod error;
pub mod flows;
pub mod inequalities;
pub mod links;
pub mod math;
pub mod numcore;
pub mod probes;
pub mod smoothing;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
