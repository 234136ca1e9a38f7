//! Transceiver hardware: base station PA non-linearity, receiver gains and
//! the UE-side linear chains.
//!
//! Each BS transmit chain is a memoryless cubic polynomial
//! `f(x) = t·x + β·x·|x|²`. Chains are component-wise: there is no cross-talk
//! between antennas.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Number of grid points used to check that an amplitude map is increasing.
pub const MONOTONE_GRID: usize = 1024;

/// Amplitude response `ρ·|a1 + a3·ρ²|` of a cubic polynomial with linear
/// coefficient `a1` and cubic coefficient `a3`.
#[inline]
pub fn cubic_amplitude(a1: Complex64, a3: Complex64, rho: f64) -> f64 {
    rho * (a1 + a3 * (rho * rho)).norm()
}

/// Smallest amplitude at which `ρ·|a1 + a3·ρ²|` stops increasing, or `None`
/// when the map increases on the whole half line.
///
/// With `s = ρ²` the squared amplitude is
/// `|a1|² s + 2 Re(conj(a1)·a3) s² + |a3|² s³`, whose derivative in `s` is a
/// quadratic; its smallest positive root is the turning point.
pub fn amplitude_turning_point(a1: Complex64, a3: Complex64) -> Option<f64> {
    let a = 3.0 * a3.norm_sqr();
    let b = 4.0 * (a1.conj() * a3).re;
    let c = a1.norm_sqr();
    if a == 0.0 {
        return if b < 0.0 { Some((-c / b).sqrt()) } else { None };
    }
    let disc = b * b - 4.0 * a * c;
    if b >= 0.0 || disc < 0.0 {
        return None;
    }
    // both roots positive; pick the smaller one in a cancellation-free form
    let s = 2.0 * c / (-b + disc.sqrt());
    Some(s.sqrt())
}

/// True when `ρ·|a1 + a3·ρ²|` is strictly increasing on `[0, rho_max]`,
/// checked on a [`MONOTONE_GRID`]-point grid and against the analytic turning
/// point.
pub fn amplitude_monotone(a1: Complex64, a3: Complex64, rho_max: f64) -> bool {
    if a1 == Complex64::new(0.0, 0.0) || !(rho_max >= 0.0) {
        return false;
    }
    if let Some(turn) = amplitude_turning_point(a1, a3) {
        if turn <= rho_max {
            return false;
        }
    }
    if rho_max == 0.0 {
        return true;
    }
    let step = rho_max / (MONOTONE_GRID - 1) as f64;
    let mut prev = 0.0;
    for n in 1..MONOTONE_GRID {
        let v = cubic_amplitude(a1, a3, step * n as f64);
        if v <= prev {
            return false;
        }
        prev = v;
    }
    true
}

/// Cubic PA parameters of one transmit chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaParams {
    t: Complex64,
    beta: Complex64,
}

impl PaParams {
    /// Builds the chain model, rejecting `t = 0` and any parameters whose
    /// amplitude map is not strictly increasing on `[0, rho_max]`.
    pub fn new(t: Complex64, beta: Complex64, rho_max: f64) -> Result<Self> {
        if t.norm() == 0.0 || !t.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: "linear gain must be finite and nonzero".into(),
            });
        }
        if !amplitude_monotone(t, beta, rho_max) {
            return Err(Error::NotInvertible { range: rho_max });
        }
        Ok(Self { t, beta })
    }

    /// Purely linear chain.
    pub fn linear(t: Complex64) -> Result<Self> {
        Self::new(t, Complex64::new(0.0, 0.0), 0.0)
    }

    pub fn t(&self) -> Complex64 {
        self.t
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    /// `t·x + β·x·|x|²`.
    #[inline]
    pub fn apply(&self, x: Complex64) -> Complex64 {
        x * (self.t + self.beta * x.norm_sqr())
    }
}

/// Free-function form of [`PaParams::apply`].
#[inline]
pub fn apply_pa(pa: &PaParams, x: Complex64) -> Complex64 {
    pa.apply(x)
}

/// Base station transceivers: non-linear TX chains and linear RX gains.
#[derive(Debug, Clone, PartialEq)]
pub struct BsHardware {
    tx: Vec<PaParams>,
    rx: Vec<Complex64>,
}

impl BsHardware {
    pub fn new(tx: Vec<PaParams>, rx: Vec<Complex64>) -> Result<Self> {
        if tx.len() != rx.len() {
            return Err(Error::LengthMismatch { expected: tx.len(), got: rx.len() });
        }
        if rx.iter().any(|r| r.norm() == 0.0 || !r.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rx",
                reason: "receiver gains must be finite and nonzero".into(),
            });
        }
        Ok(Self { tx, rx })
    }

    pub fn antennas(&self) -> usize {
        self.tx.len()
    }

    pub fn tx(&self) -> &[PaParams] {
        &self.tx
    }

    pub fn rx(&self) -> &[Complex64] {
        &self.rx
    }
}

/// Applies every chain to its own input sample.
pub fn apply_tx_array(hw: &BsHardware, x: &[Complex64]) -> Result<Vec<Complex64>> {
    if x.len() != hw.antennas() {
        return Err(Error::LengthMismatch { expected: hw.antennas(), got: x.len() });
    }
    Ok(hw.tx.iter().zip(x).map(|(pa, &xm)| pa.apply(xm)).collect())
}

/// UE transmit/receive gains and receiver noise powers.
#[derive(Debug, Clone, PartialEq)]
pub struct UeHardware {
    tx_gain: Vec<Complex64>,
    rx_gain: Vec<Complex64>,
    noise_power: Vec<f64>,
}

impl UeHardware {
    pub fn new(tx_gain: Vec<Complex64>, rx_gain: Vec<Complex64>, noise_power: Vec<f64>) -> Result<Self> {
        let k = tx_gain.len();
        for len in [rx_gain.len(), noise_power.len()] {
            if len != k {
                return Err(Error::LengthMismatch { expected: k, got: len });
            }
        }
        if tx_gain.iter().chain(&rx_gain).any(|g| g.norm() == 0.0 || !g.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ue gains",
                reason: "UE gains must be finite and nonzero".into(),
            });
        }
        if noise_power.iter().any(|&n| !(n >= 0.0) || !n.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "noise_power",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(Self { tx_gain, rx_gain, noise_power })
    }

    /// Unit gains and a common noise power.
    pub fn ideal(k: usize, noise_power: f64) -> Result<Self> {
        let one = Complex64::new(1.0, 0.0);
        Self::new(vec![one; k], vec![one; k], vec![noise_power; k])
    }

    pub fn users(&self) -> usize {
        self.tx_gain.len()
    }

    pub fn tx_gain(&self) -> &[Complex64] {
        &self.tx_gain
    }

    pub fn rx_gain(&self) -> &[Complex64] {
        &self.rx_gain
    }

    pub fn noise_power(&self) -> &[f64] {
        &self.noise_power
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RxMode {
    /// `r_m = 0.9 + 0.2·(M−m)/M·exp(j2πm/M)`, m = 1..M.
    PaperRx,
    RandomRx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxMode {
    Fixed,
    RandomTx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub rx_mode: RxMode,
    /// random-rx: relative amplitude spread (uniform in ±spread).
    pub rx_amp_spread: f64,
    /// random-rx: phase spread in radians (uniform in ±spread).
    pub rx_phase_spread: f64,
    pub tx_mode: TxMode,
    pub tx_amp_spread: f64,
    pub tx_phase_spread: f64,
    /// Worst-case gain compression at `rho_ref`, in dB.
    pub compression_db: f64,
    /// fixed mode: `[re, im]` of t.
    pub fixed_t: [f64; 2],
    /// fixed mode: `[re, im]` of β.
    pub fixed_beta: [f64; 2],
    /// Reference operating amplitude.
    pub rho_ref: f64,
    /// Operating range `rho_max = rho_max_factor · rho_ref`.
    pub rho_max_factor: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            rx_mode: RxMode::PaperRx,
            rx_amp_spread: 0.1,
            rx_phase_spread: 0.5,
            tx_mode: TxMode::RandomTx,
            tx_amp_spread: 0.1,
            tx_phase_spread: 0.1,
            compression_db: 0.5,
            fixed_t: [1.0, 0.0],
            fixed_beta: [-0.05, -0.02],
            rho_ref: 1.0,
            rho_max_factor: 1.2,
        }
    }
}

impl HardwareConfig {
    pub fn rho_max(&self) -> f64 {
        self.rho_ref * self.rho_max_factor
    }

    /// Magnitude of β giving `compression_db` at `rho_ref` when β opposes a
    /// unit linear gain.
    pub fn beta_magnitude(&self) -> f64 {
        (1.0 - 10f64.powf(-self.compression_db / 20.0)) / (self.rho_ref * self.rho_ref)
    }
}

/// The `paper-rx` receiver gain of antenna `m` (zero-based) in an
/// `M`-antenna array.
pub fn paper_rx_gain(m: usize, antennas: usize) -> Complex64 {
    let idx = (m + 1) as f64;
    let mm = antennas as f64;
    Complex64::new(0.9, 0.0) + Complex64::from_polar(0.2 * (mm - idx) / mm, 2.0 * PI * idx / mm)
}

fn spread<R: Rng>(rng: &mut R, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}

/// Samples the base station hardware. A pure function of `(cfg, antennas, seed)`.
pub fn sample_bs_hardware(cfg: &HardwareConfig, antennas: usize, seed: u64) -> Result<BsHardware> {
    if antennas < 2 {
        return Err(Error::InvalidParameter { name: "M", reason: "at least 2 antennas required".into() });
    }
    let mut rng: SimRng = rng::seeded(seed);
    let rho_max = cfg.rho_max();

    let rx = (0..antennas)
        .map(|m| match cfg.rx_mode {
            RxMode::PaperRx => paper_rx_gain(m, antennas),
            RxMode::RandomRx => {
                let a = 1.0 + spread(&mut rng, cfg.rx_amp_spread);
                Complex64::from_polar(a, spread(&mut rng, cfg.rx_phase_spread))
            }
        })
        .collect();

    let b = cfg.beta_magnitude();
    let tx = (0..antennas)
        .map(|_| match cfg.tx_mode {
            TxMode::Fixed => PaParams::new(
                Complex64::new(cfg.fixed_t[0], cfg.fixed_t[1]),
                Complex64::new(cfg.fixed_beta[0], cfg.fixed_beta[1]),
                rho_max,
            ),
            TxMode::RandomTx => {
                let amp = 1.0 + spread(&mut rng, cfg.tx_amp_spread);
                let t = Complex64::from_polar(amp, spread(&mut rng, cfg.tx_phase_spread));
                let beta = Complex64::from_polar(b, rng.random_range(0.0..TAU));
                PaParams::new(t, beta, rho_max)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    BsHardware::new(tx, rx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UeConfig {
    /// Relative amplitude spread of UE TX/RX gains; phases are uniform.
    pub gain_amp_spread: f64,
    /// Receiver noise power of every UE.
    pub noise_power: f64,
}

impl Default for UeConfig {
    fn default() -> Self {
        Self { gain_amp_spread: 0.1, noise_power: 0.1 }
    }
}

pub fn sample_ue_hardware(cfg: &UeConfig, users: usize, seed: u64) -> Result<UeHardware> {
    let mut rng: SimRng = rng::seeded(seed);
    let gain = |rng: &mut SimRng| {
        let a = 1.0 + spread(rng, cfg.gain_amp_spread);
        Complex64::from_polar(a, rng.random_range(0.0..TAU))
    };
    let tx = (0..users).map(|_| gain(&mut rng)).collect();
    let rx = (0..users).map(|_| gain(&mut rng)).collect();
    UeHardware::new(tx, rx, vec![cfg.noise_power; users])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn apply_pa_examples() {
        let lin = PaParams::linear(c(1.0, 0.0)).unwrap();
        assert_eq!(lin.apply(c(0.5, 0.0)), c(0.5, 0.0));
        let pa = PaParams::new(c(1.0, 0.0), c(-0.1, 0.0), 1.2).unwrap();
        assert_eq!(pa.apply(c(0.0, 0.0)), c(0.0, 0.0));
        assert_relative_eq!(pa.apply(c(1.0, 0.0)).re, 0.9, epsilon = 1e-15);
        assert_eq!(pa.apply(c(1.0, 0.0)).im, 0.0);
    }

    #[test]
    fn zero_gain_rejected() {
        assert!(PaParams::new(c(0.0, 0.0), c(0.1, 0.0), 1.0).is_err());
    }

    #[test]
    fn non_monotone_rejected() {
        // turning point of ρ(1 − 0.5ρ²) is at ρ = sqrt(2/3) ≈ 0.816
        assert!(matches!(
            PaParams::new(c(1.0, 0.0), c(-0.5, 0.0), 1.0),
            Err(Error::NotInvertible { .. })
        ));
        assert!(PaParams::new(c(1.0, 0.0), c(-0.5, 0.0), 0.8).is_ok());
    }

    #[test]
    fn turning_point_closed_form() {
        let turn = amplitude_turning_point(c(1.0, 0.0), c(-0.5, 0.0)).unwrap();
        assert_relative_eq!(turn, (2.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert!(amplitude_turning_point(c(1.0, 0.0), c(0.5, 0.0)).is_none());
        assert!(amplitude_turning_point(c(1.0, 0.0), c(0.0, 0.3)).is_none());
    }

    #[test]
    fn paper_rx_examples() {
        let r100 = paper_rx_gain(99, 100);
        assert_relative_eq!(r100.re, 0.9, epsilon = 1e-15);
        assert_relative_eq!(r100.im, 0.0, epsilon = 1e-15);
        let r50 = paper_rx_gain(49, 100);
        assert_relative_eq!(r50.re, 0.8, epsilon = 1e-15);
        assert!(r50.im.abs() < 1e-15);
    }

    #[test]
    fn fixed_mode_passthrough() {
        let cfg = HardwareConfig { tx_mode: TxMode::Fixed, ..Default::default() };
        for seed in [0, 1, 99] {
            let hw = sample_bs_hardware(&cfg, 10, seed).unwrap();
            for pa in hw.tx() {
                assert_eq!(pa.t(), c(1.0, 0.0));
                assert_eq!(pa.beta(), c(-0.05, -0.02));
            }
        }
    }

    #[test]
    fn random_tx_compression_target() {
        let cfg = HardwareConfig::default();
        let hw = sample_bs_hardware(&cfg, 64, 3).unwrap();
        let b = cfg.beta_magnitude();
        assert_relative_eq!(20.0 * (1.0 - b).log10(), -0.5, epsilon = 1e-12);
        for pa in hw.tx() {
            assert_relative_eq!(pa.beta().norm(), b, epsilon = 1e-12);
            assert!((pa.t().norm() - 1.0).abs() <= 0.1 + 1e-12);
            assert!(pa.t().arg().abs() <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = HardwareConfig { rx_mode: RxMode::RandomRx, ..Default::default() };
        let a = sample_bs_hardware(&cfg, 16, 42).unwrap();
        let b = sample_bs_hardware(&cfg, 16, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_bs_hardware(&cfg, 16, 43).unwrap());
    }

    #[test]
    fn overly_strong_compression_rejected() {
        let cfg = HardwareConfig {
            tx_mode: TxMode::Fixed,
            fixed_beta: [-0.5, 0.0],
            ..Default::default()
        };
        assert!(sample_bs_hardware(&cfg, 4, 0).is_err());
        assert!(sample_bs_hardware(&HardwareConfig::default(), 1, 0).is_err());
    }

    #[test]
    fn tx_array_examples() {
        let lin2 = PaParams::linear(c(2.0, 0.0)).unwrap();
        let hw = BsHardware::new(vec![lin2; 3], vec![c(1.0, 0.0); 3]).unwrap();
        let x = [c(0.1, 0.2), c(-0.3, 0.0), c(0.0, 1.0)];
        let y = apply_tx_array(&hw, &x).unwrap();
        for (yi, xi) in y.iter().zip(&x) {
            assert_eq!(*yi, xi * 2.0);
        }
        assert!(apply_tx_array(&hw, &[c(0.0, 0.0); 3]).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(matches!(apply_tx_array(&hw, &x[..2]), Err(Error::LengthMismatch { .. })));

        let hw = BsHardware::new(
            vec![
                PaParams::new(c(1.0, 0.0), c(-0.1, 0.0), 1.2).unwrap(),
                PaParams::linear(c(0.0, 1.0)).unwrap(),
            ],
            vec![c(1.0, 0.0); 2],
        )
        .unwrap();
        let y = apply_tx_array(&hw, &[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_relative_eq!(y[0].re, 0.9, epsilon = 1e-15);
        assert_eq!(y[1], c(0.0, 1.0));
    }

    #[test]
    fn ue_hardware_validation() {
        assert!(UeHardware::new(vec![c(1.0, 0.0)], vec![], vec![0.1]).is_err());
        assert!(UeHardware::new(vec![c(1.0, 0.0)], vec![c(0.0, 0.0)], vec![0.1]).is_err());
        assert!(UeHardware::new(vec![c(1.0, 0.0)], vec![c(1.0, 0.0)], vec![-1.0]).is_err());
        let ue = sample_ue_hardware(&UeConfig::default(), 4, 5).unwrap();
        assert_eq!(ue.users(), 4);
    }
}
