//! Closed-form reciprocity calibration over the linearized array.
//!
//! After predistortion antenna `i` behaves as a linear transmitter with gain
//! `t̃_i`. Pilots on the links between the reference antenna (index 0) and
//! every other antenna `m` give direct estimates of `r_0·t̃_m` and `r_m·t̃_0`;
//! their ratio is the normalized reciprocity coefficient
//! `c̃_m = (r_0·t̃_m)/(r_m·t̃_0)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Denominator magnitude below which a calibration ratio is rejected.
const DEGENERATE_TOL: f64 = 1e-12;

/// Normalized calibration coefficients; entry 0 is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationVector {
    c: Vec<Complex64>,
}

impl CalibrationVector {
    pub fn new(c: Vec<Complex64>) -> Result<Self> {
        if c.first() != Some(&Complex64::new(1.0, 0.0)) {
            return Err(Error::Degenerate("first calibration entry must be exactly 1".into()));
        }
        if c.iter().any(|v| !v.is_finite() || v.norm() == 0.0) {
            return Err(Error::Degenerate("calibration entries must be finite and nonzero".into()));
        }
        Ok(Self { c })
    }

    /// No calibration: all coefficients 1.
    pub fn identity(m: usize) -> Self {
        Self { c: vec![Complex64::new(1.0, 0.0); m] }
    }

    /// Ground truth `c_m = t̃_m/r_m`, normalized by `c_0`.
    pub fn from_chains(t_tilde: &[Complex64], r: &[Complex64]) -> Result<Self> {
        if t_tilde.len() != r.len() {
            return Err(Error::LengthMismatch { expected: t_tilde.len(), got: r.len() });
        }
        if t_tilde.is_empty() {
            return Err(Error::Degenerate("empty chains".into()));
        }
        let c0 = t_tilde[0] / r[0];
        let mut c: Vec<Complex64> = t_tilde.iter().zip(r).map(|(t, r)| (t / r) / c0).collect();
        c[0] = Complex64::new(1.0, 0.0);
        Self::new(c)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// Pilots and observations on one direction of a reference link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkObservations {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Calibration pilot exchange between the reference antenna and every other
/// antenna. Index `m − 1` holds the link to/from antenna `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalMeasurements {
    /// Antenna `m` transmits, reference receives: `y_{m0} = h·r_0·t̃_m·x + n`.
    pub to_ref: Vec<LinkObservations>,
    /// Reference transmits, antenna `m` receives: `y_{0m} = h·r_m·t̃_0·x + n`.
    pub from_ref: Vec<LinkObservations>,
}

impl CalMeasurements {
    pub fn antennas(&self) -> usize {
        self.to_ref.len() + 1
    }
}

/// Simulates `N_cal` pilots in each direction of every reference link.
/// Pilots have constant amplitude `sqrt(pilot_power)` and uniform phase.
pub fn simulate_cal_measurements(
    t_tilde: &[Complex64],
    r: &[Complex64],
    h: &CouplingMatrix,
    n_cal: usize,
    pilot_power: f64,
    n0: f64,
    seed: u64,
) -> Result<CalMeasurements> {
    let m = h.antennas();
    for len in [t_tilde.len(), r.len()] {
        if len != m {
            return Err(Error::LengthMismatch { expected: m, got: len });
        }
    }
    if n_cal < 2 {
        return Err(Error::InvalidParameter { name: "N_cal", reason: "at least 2 pilots required".into() });
    }
    if !(pilot_power > 0.0) {
        return Err(Error::InvalidParameter { name: "pilot_power", reason: "must be positive".into() });
    }
    let amp = pilot_power.sqrt();
    let link = |gain: Complex64, rng: &mut rng::SimRng| {
        let x: Vec<Complex64> = (0..n_cal).map(|_| amp * rng::unit_phasor(rng)).collect();
        let y = x.iter().map(|&xv| gain * xv + rng::complex_normal(rng, n0)).collect();
        LinkObservations { x, y }
    };
    let mut to_ref = Vec::with_capacity(m - 1);
    let mut from_ref = Vec::with_capacity(m - 1);
    for k in 1..m {
        let mut rng = rng::seeded(rng::child_seed(seed, tag::CAL, k as u64));
        to_ref.push(link(h.get(k, 0) * r[0] * t_tilde[k], &mut rng));
        from_ref.push(link(h.get(0, k) * r[k] * t_tilde[0], &mut rng));
    }
    Ok(CalMeasurements { to_ref, from_ref })
}

/// `y / (h·x)`: single-pilot estimate of the product `r_j·t̃_i`.
pub fn estimate_gain_product(y: Complex64, h: Complex64, x: Complex64) -> Result<Complex64> {
    let d = h * x;
    if d.norm() == 0.0 {
        return Err(Error::ZeroDivisor("estimate_gain_product"));
    }
    Ok(y / d)
}

/// Scalar operation tally of a calibration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub mul: u64,
    pub div: u64,
    pub add: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.mul + self.div + self.add
    }
}

fn mean_product(obs: &LinkObservations, h: Complex64, ops: &mut OpCount) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&x, &y) in obs.x.iter().zip(&obs.y) {
        acc += estimate_gain_product(y, h, x)?;
        ops.mul += 1;
        ops.div += 1;
        ops.add += 1;
    }
    ops.div += 1;
    Ok(acc / obs.x.len() as f64)
}

/// [`estimate_calibration`] with an operation tally.
pub fn estimate_calibration_counted(meas: &CalMeasurements, h: &CouplingMatrix) -> Result<(CalibrationVector, OpCount)> {
    let m = meas.antennas();
    if h.antennas() != m || meas.from_ref.len() != m - 1 {
        return Err(Error::Dimension(format!("{m} antennas in measurements, {} in coupling", h.antennas())));
    }
    let mut ops = OpCount::default();
    let mut c = Vec::with_capacity(m);
    c.push(Complex64::new(1.0, 0.0));
    for k in 1..m {
        if meas.to_ref[k - 1].x.is_empty() || meas.from_ref[k - 1].x.is_empty() {
            return Err(Error::Degenerate(format!("no pilots on link 0↔{k}")));
        }
        let num = mean_product(&meas.to_ref[k - 1], h.get(k, 0), &mut ops)?;
        let den = mean_product(&meas.from_ref[k - 1], h.get(0, k), &mut ops)?;
        if den.norm() < DEGENERATE_TOL {
            return Err(Error::Degenerate(format!("calibration denominator vanishes at antenna {k}")));
        }
        ops.div += 1;
        c.push(num / den);
    }
    Ok((CalibrationVector::new(c)?, ops))
}

/// Ratio estimate `ĉ̃_m = mean(r_0·t̃_m) / mean(r_m·t̃_0)`.
pub fn estimate_calibration(meas: &CalMeasurements, h: &CouplingMatrix) -> Result<CalibrationVector> {
    estimate_calibration_counted(meas, h).map(|(c, _)| c)
}

/// `(diag(c)·H_UL)ᵀ`, a `K × M` downlink channel estimate.
pub fn apply_calibration(c: &CalibrationVector, h_ul: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if h_ul.nrows() != c.len() {
        return Err(Error::Dimension(format!(
            "calibration has {} entries, UL channel has {} rows",
            c.len(),
            h_ul.nrows()
        )));
    }
    Ok(DMatrix::from_fn(h_ul.ncols(), h_ul.nrows(), |k, m| c.c[m] * h_ul[(m, k)]))
}

/// Mean squared error over the non-reference entries.
pub fn calibration_mse(estimate: &CalibrationVector, truth: &CalibrationVector) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "calibration vectors differ in length");
    let m = estimate.len();
    if m < 2 {
        return 0.0;
    }
    let sum: f64 = estimate.c[1..].iter().zip(&truth.c[1..]).map(|(a, b)| (a - b).norm_sqr()).sum();
    sum / (m - 1) as f64
}
