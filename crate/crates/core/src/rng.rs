//! Deterministic seeding and circular complex Gaussian sampling.
//!
//! Every random stream in a run is derived from the master seed with
//! [`child_seed`], keyed by a module tag and an index (trial, antenna,
//! realization). Streams therefore never depend on scheduling order, and a
//! run is reproducible bit for bit whatever the worker count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Module tags used as the second key of [`child_seed`].
pub mod tag {
    pub const HARDWARE: u64 = 1;
    pub const COUPLING: u64 = 2;
    pub const DPD_PILOTS: u64 = 3;
    pub const DPD_NOISE: u64 = 4;
    pub const CAL: u64 = 5;
    pub const CHANNEL: u64 = 6;
    pub const SYMBOLS: u64 = 7;
    pub const UE_HARDWARE: u64 = 8;
    pub const CSI_NOISE: u64 = 9;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(master ^ splitmix64(tag)) ^ index)`.
pub fn child_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(tag)) ^ index)
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws from CN(0, variance): real and imaginary parts each have variance
/// `variance / 2`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Unit-modulus complex number with phase uniform on [0, 2π).
#[inline]
pub fn unit_phasor<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}
