//! Over-the-air digital pre-distortion and TDD reciprocity calibration for a
//! massive MIMO base station with non-linear transmit chains.
//!
//! The pipeline has three stages, each in its own module:
//!
//! 1. [`ota_dpd`]: every antenna sends pilots over the mutual-coupling paths of
//!    the array; the other antennas' measurements are combined and a least
//!    squares fit recovers the cubic PA model up to an unknown linear factor.
//! 2. [`dpd_inverse`]: the fitted model is inverted (exactly, or through a
//!    finite lookup table) and used as the per-antenna predistorter.
//! 3. [`reciprocity`]: with linearized transmitters, calibration pilots to and
//!    from a reference antenna give closed-form estimates of the reciprocity
//!    coefficients.
//!
//! [`downlink`] measures what the calibration buys under zero-forcing
//! precoding and [`experiment`] runs the calibration-error sweep and the
//! downlink rate CDF study.

pub mod cli;
pub mod config;
pub mod coupling;
pub mod downlink;
pub mod dpd_inverse;
pub mod error;
pub mod experiment;
pub mod hardware;
pub mod ota_dpd;
pub mod output;
pub mod reciprocity;
pub mod rng;
pub mod selftest;

pub use error::{Error, Result};
pub use num_complex::Complex64;
