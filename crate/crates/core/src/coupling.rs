//! Reciprocal mutual-coupling gains between the base station antennas.
//!
//! The array is a uniform line; the coupling magnitude in dB falls off
//! affinely with the index distance `|i − j|` and phases are uniform.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    /// `|h_ij|_dB = intercept_db + slope_db_per_index·|i − j|`.
    pub intercept_db: f64,
    /// Change per index step, dB. Must be ≤ 0.
    pub slope_db_per_index: f64,
    /// Seed for the coupling phases; derived from the master seed if absent.
    pub phase_seed: Option<u64>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { intercept_db: -20.0, slope_db_per_index: -0.5, phase_seed: None }
    }
}

impl CouplingConfig {
    /// `|h_ij|` for index distance `d ≥ 1`.
    pub fn magnitude(&self, distance: usize) -> f64 {
        let db = self.intercept_db + self.slope_db_per_index * distance as f64;
        10f64.powf(db / 20.0)
    }
}

/// Symmetric `M×M` coupling matrix. The diagonal is unused and stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    m: usize,
    h: Vec<Complex64>,
}

impl CouplingMatrix {
    /// Builds the matrix from the upper triangle `f(i, j)`, `i < j`.
    pub fn from_upper<F>(m: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Complex64,
    {
        if m < 2 {
            return Err(Error::InvalidParameter { name: "M", reason: "at least 2 antennas required".into() });
        }
        let mut h = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for j in i + 1..m {
                let v = f(i, j);
                if v.norm() == 0.0 || !v.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "h",
                        reason: format!("coupling ({i}, {j}) must be finite and nonzero"),
                    });
                }
                h[i * m + j] = v;
                h[j * m + i] = v;
            }
        }
        Ok(Self { m, h })
    }

    pub fn antennas(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.h[i * self.m + j]
    }

    /// Smallest off-diagonal `|h_ij|²`.
    pub fn min_gain_sq(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.m {
            for j in i + 1..self.m {
                min = min.min(self.get(i, j).norm_sqr());
            }
        }
        min
    }
}

/// Generates the coupling matrix for `m` antennas.
pub fn build_coupling(cfg: &CouplingConfig, m: usize, seed: u64) -> Result<CouplingMatrix> {
    if !(cfg.slope_db_per_index <= 0.0) {
        return Err(Error::InvalidParameter {
            name: "slope_db_per_index",
            reason: "coupling must not increase with distance (slope ≤ 0)".into(),
        });
    }
    if !cfg.intercept_db.is_finite() {
        return Err(Error::InvalidParameter { name: "intercept_db", reason: "must be finite".into() });
    }
    let mut rng = rng::seeded(seed);
    CouplingMatrix::from_upper(m, |i, j| cfg.magnitude(j - i) * rng::unit_phasor(&mut rng))
}

/// Variance of the combined noise at antenna `i`:
/// `N0/(M−1)² · Σ_{j≠i} 1/|h_ij|²`.
pub fn combined_noise_variance(h: &CouplingMatrix, i: usize, n0: f64) -> f64 {
    let m = h.antennas();
    let sum: f64 = (0..m).filter(|&j| j != i).map(|j| 1.0 / h.get(i, j).norm_sqr()).sum();
    n0 / ((m - 1) * (m - 1)) as f64 * sum
}

/// Noise power giving `snr_db` on the weakest coupling link for pilots of
/// power `pilot_power`.
pub fn n0_from_link_snr(h: &CouplingMatrix, pilot_power: f64, snr_db: f64) -> f64 {
    pilot_power * h.min_gain_sq() / 10f64.powf(snr_db / 10.0)
}
