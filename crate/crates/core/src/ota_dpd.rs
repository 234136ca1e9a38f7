//! Over-the-air characterization of the transmit non-linearity.
//!
//! Antenna `i` sends `N_dpd` pilots; every other antenna `j` receives
//! `h_ij·r_j·f_i(x) + n`. Dividing out the known coupling and averaging over
//! `j` leaves `q_i·f_i(x) + ñ`, where `q_i` is the mean of the other
//! antennas' receive gains. A two-column least squares fit on the regressor
//! `[x, x|x|²]` then gives `θ_i = (q_i·t_i, q_i·β_i)`.

use num_complex::Complex64;

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::hardware::{BsHardware, PaParams};
use crate::rng::{self, tag};

/// Number of distinct pilot amplitudes cycled over the pilot index.
pub const PILOT_LEVELS: usize = 8;

/// Relative Gram determinant below which the regressor counts as rank
/// deficient.
const RANK_TOL: f64 = 1e-12;

/// Pilot symbols `x_{i,ℓ}`, one row of `N_dpd` symbols per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct DpdPilotSet {
    m: usize,
    n: usize,
    x: Vec<Complex64>,
    power: f64,
}

impl DpdPilotSet {
    /// Wraps a row-major `m × n` pilot matrix, checking `n ≥ 2` and the rank
    /// of every antenna's regressor.
    pub fn from_rows(m: usize, n: usize, x: Vec<Complex64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter { name: "N_dpd", reason: "at least 2 pilots required".into() });
        }
        if x.len() != m * n {
            return Err(Error::LengthMismatch { expected: m * n, got: x.len() });
        }
        for i in 0..m {
            if !regressor_full_rank(&x[i * n..(i + 1) * n]) {
                return Err(Error::RankDeficient { antenna: i });
            }
        }
        let power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
        Ok(Self { m, n, x, power })
    }

    pub fn antennas(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Mean pilot power `mean |x|²`.
    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.x[i * self.n..(i + 1) * self.n]
    }
}

/// Normal-equation Gram entries of `Φ = [x, x|x|²]`: `(Σ|x|², Σ|x|⁴, Σ|x|⁶)`.
fn gram(x: &[Complex64]) -> (f64, f64, f64) {
    x.iter().fold((0.0, 0.0, 0.0), |(a, b, c), v| {
        let p = v.norm_sqr();
        (a + p, b + p * p, c + p * p * p)
    })
}

/// True when the two regressor columns are linearly independent. Constant
/// amplitude pilots make the cubic column a scalar multiple of the linear one.
pub fn regressor_full_rank(x: &[Complex64]) -> bool {
    let (g11, g12, g22) = gram(x);
    if g11 == 0.0 || g22 == 0.0 {
        return false;
    }
    let det = g11 * g22 - g12 * g12;
    det > RANK_TOL * g11 * g22
}

/// Pilots on an amplitude grid of `min(8, N_dpd)` evenly spaced levels in
/// `[amp_lo, amp_hi]`, cycled over the pilot index, with uniform random
/// phase per symbol.
pub fn make_dpd_pilots(m: usize, n_dpd: usize, amp_lo: f64, amp_hi: f64, seed: u64) -> Result<DpdPilotSet> {
    if n_dpd < 2 {
        return Err(Error::InvalidParameter { name: "N_dpd", reason: "at least 2 pilots required".into() });
    }
    if !(amp_lo > 0.0 && amp_hi > amp_lo) {
        return Err(Error::InvalidParameter {
            name: "pilot amplitudes",
            reason: format!("need 0 < amp_lo < amp_hi, got [{amp_lo}, {amp_hi}]"),
        });
    }
    let levels = PILOT_LEVELS.min(n_dpd);
    let amps: Vec<f64> = (0..levels)
        .map(|k| amp_lo + (amp_hi - amp_lo) * k as f64 / (levels - 1) as f64)
        .collect();
    let mut rng = rng::seeded(seed);
    let x = (0..m * n_dpd)
        .map(|idx| amps[(idx % n_dpd) % levels] * rng::unit_phasor(&mut rng))
        .collect();
    DpdPilotSet::from_rows(m, n_dpd, x)
}

/// OTA measurements `y_{ij,ℓ}` stored as `[i][j][ℓ]`; `i = j` slots are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DpdMeasurements {
    m: usize,
    n: usize,
    y: Vec<Complex64>,
}

impl DpdMeasurements {
    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> Complex64 {
        self.y[(i * self.m + j) * self.n + l]
    }

    /// All measurements originating at antenna `i`, row-major `[j][ℓ]`.
    pub fn from_antenna(&self, i: usize) -> &[Complex64] {
        let block = self.m * self.n;
        &self.y[i * block..(i + 1) * block]
    }
}

fn check_dims(hw: &BsHardware, h: &CouplingMatrix, pilots: &DpdPilotSet) -> Result<()> {
    let m = hw.antennas();
    for got in [h.antennas(), pilots.antennas()] {
        if got != m {
            return Err(Error::LengthMismatch { expected: m, got });
        }
    }
    Ok(())
}

/// Measurements of the pilots sent by antenna `i`, row-major `[j][ℓ]`.
///
/// The noise stream is keyed by `(seed, i)`, so the per-antenna and the full
/// tensor forms produce identical values.
pub fn simulate_antenna_measurements(
    hw: &BsHardware,
    h: &CouplingMatrix,
    pilots: &DpdPilotSet,
    i: usize,
    n0: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    check_dims(hw, h, pilots)?;
    let (m, n) = (hw.antennas(), pilots.len());
    let pa = hw.tx()[i];
    let clean: Vec<Complex64> = pilots.row(i).iter().map(|&x| pa.apply(x)).collect();
    let mut rng = rng::seeded(rng::child_seed(seed, tag::DPD_NOISE, i as u64));
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for j in (0..m).filter(|&j| j != i) {
        let gain = h.get(i, j) * hw.rx()[j];
        for (slot, &f) in out[j * n..(j + 1) * n].iter_mut().zip(&clean) {
            *slot = gain * f + rng::complex_normal(&mut rng, n0);
        }
    }
    Ok(out)
}

/// Full `M × M × N_dpd` measurement tensor.
pub fn simulate_dpd_measurements(
    hw: &BsHardware,
    h: &CouplingMatrix,
    pilots: &DpdPilotSet,
    n0: f64,
    seed: u64,
) -> Result<DpdMeasurements> {
    let (m, n) = (hw.antennas(), pilots.len());
    let mut y = Vec::with_capacity(m * m * n);
    for i in 0..m {
        y.extend(simulate_antenna_measurements(hw, h, pilots, i, n0, seed)?);
    }
    Ok(DpdMeasurements { m, n, y })
}

/// Combines the `[j][ℓ]` block of antenna `i`:
/// `ỹ_{i,ℓ} = 1/(M−1) · Σ_{j≠i} y_{ij,ℓ} / h_ij`.
pub fn combine_block(block: &[Complex64], h: &CouplingMatrix, i: usize) -> Vec<Complex64> {
    let m = h.antennas();
    let n = block.len() / m;
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for j in (0..m).filter(|&j| j != i) {
        let inv = 1.0 / h.get(i, j);
        for (a, &y) in acc.iter_mut().zip(&block[j * n..(j + 1) * n]) {
            *a += y * inv;
        }
    }
    let scale = 1.0 / (m - 1) as f64;
    acc.iter_mut().for_each(|a| *a *= scale);
    acc
}

pub fn combine_measurements(y: &DpdMeasurements, h: &CouplingMatrix, i: usize) -> Vec<Complex64> {
    combine_block(y.from_antenna(i), h, i)
}

/// `q_i`: mean receive gain of all antennas other than `i`.
pub fn q_factor(rx: &[Complex64], i: usize) -> Complex64 {
    let sum: Complex64 = rx.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r).sum();
    sum / (rx.len() - 1) as f64
}

/// `q_i` for every antenna.
pub fn q_factors(rx: &[Complex64]) -> Vec<Complex64> {
    (0..rx.len()).map(|i| q_factor(rx, i)).collect()
}

/// Scaled non-linearity `(θ1, θ2) = (q·t, q·β)` of one chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub theta1: Complex64,
    pub theta2: Complex64,
}

impl ThetaEstimate {
    pub fn new(theta1: Complex64, theta2: Complex64) -> Result<Self> {
        if theta1.norm() == 0.0 || !theta1.is_finite() || !theta2.is_finite() {
            return Err(Error::Degenerate(format!("theta = ({theta1}, {theta2})")));
        }
        Ok(Self { theta1, theta2 })
    }

    /// The value a noiseless estimator converges to.
    pub fn exact(pa: &PaParams, q: Complex64) -> Self {
        Self { theta1: q * pa.t(), theta2: q * pa.beta() }
    }

    /// `θ1·x + θ2·x|x|²`.
    #[inline]
    pub fn apply(&self, x: Complex64) -> Complex64 {
        x * (self.theta1 + self.theta2 * x.norm_sqr())
    }
}

/// Least squares `θ̂ = (ΦᴴΦ)⁻¹ Φᴴ ỹ`, solved in closed form on the 2×2 normal
/// equations.
pub fn estimate_theta(y_tilde: &[Complex64], pilots: &[Complex64]) -> Result<ThetaEstimate> {
    if y_tilde.len() != pilots.len() {
        return Err(Error::LengthMismatch { expected: pilots.len(), got: y_tilde.len() });
    }
    if !regressor_full_rank(pilots) {
        return Err(Error::RankDeficient { antenna: 0 });
    }
    let (g11, g12, g22) = gram(pilots);
    let (mut b1, mut b2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (&x, &y) in pilots.iter().zip(y_tilde) {
        let xc = x.conj();
        b1 += xc * y;
        b2 += xc * x.norm_sqr() * y;
    }
    let det = g11 * g22 - g12 * g12;
    let theta1 = (b1 * g22 - b2 * g12) / det;
    let theta2 = (b2 * g11 - b1 * g12) / det;
    ThetaEstimate::new(theta1, theta2)
}

/// Runs the whole characterization stage and returns one estimate per antenna.
pub fn characterize_array(
    hw: &BsHardware,
    h: &CouplingMatrix,
    pilots: &DpdPilotSet,
    n0: f64,
    seed: u64,
) -> Result<Vec<ThetaEstimate>> {
    (0..hw.antennas())
        .map(|i| {
            let block = simulate_antenna_measurements(hw, h, pilots, i, n0, seed)?;
            let y_tilde = combine_block(&block, h, i);
            estimate_theta(&y_tilde, pilots.row(i)).map_err(|e| match e {
                Error::RankDeficient { .. } => Error::RankDeficient { antenna: i },
                e => e,
            })
        })
        .collect()
}
