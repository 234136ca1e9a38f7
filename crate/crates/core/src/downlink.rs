//! Downlink link-level evaluation under zero-forcing precoding.
//!
//! A realization draws an i.i.d. Rayleigh channel, forms the UL channel seen
//! by the base station, maps it to a DL estimate with the calibration vector
//! and precodes with ZF. Symbols then go through the real chain
//! (predistorter, PA, propagation, UE receiver) and each UE's SINR is measured
//! by projecting its received samples onto its own symbols.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dpd_inverse::{linearized_chain_gain, DpdInverse};
use crate::error::{Error, Result};
use crate::hardware::{BsHardware, UeHardware};
use crate::ota_dpd::q_factors;
use crate::reciprocity::{apply_calibration, CalibrationVector};
use crate::rng::{self, tag};

/// Reciprocal propagation channel `H` (`M × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DMatrix<Complex64>,
}

impl ChannelRealization {
    /// `H_UL = diag(r)·H·diag(t_U)`.
    pub fn ul_channel(&self, bs: &BsHardware, ue: &UeHardware) -> Result<DMatrix<Complex64>> {
        let (m, k) = self.h.shape();
        if bs.antennas() != m || ue.users() != k {
            return Err(Error::Dimension(format!(
                "channel is {m}×{k}, hardware has {} antennas and {} users",
                bs.antennas(),
                ue.users()
            )));
        }
        Ok(DMatrix::from_fn(m, k, |i, j| bs.rx()[i] * self.h[(i, j)] * ue.tx_gain()[j]))
    }
}

/// i.i.d. CN(0, 1) channel.
pub fn sample_channel(m: usize, k: usize, seed: u64) -> Result<ChannelRealization> {
    if k == 0 || k > m {
        return Err(Error::InvalidParameter { name: "K", reason: format!("need 1 ≤ K ≤ M, got K={k}, M={m}") });
    }
    let mut rng = rng::seeded(seed);
    let h = DMatrix::from_fn(m, k, |_, _| rng::complex_normal(&mut rng, 1.0));
    Ok(ChannelRealization { h })
}

/// `W = sqrt(power) · H_effᴴ (H_eff H_effᴴ)⁻¹`, so that `H_eff·W = sqrt(power)·I`.
pub fn zf_precoder(h_eff: &DMatrix<Complex64>, power: f64) -> Result<DMatrix<Complex64>> {
    let (k, m) = h_eff.shape();
    if k == 0 || k > m {
        return Err(Error::RankDeficientChannel);
    }
    let hh = h_eff.adjoint();
    let gram = h_eff * &hh;
    let chol = gram.clone().cholesky().ok_or(Error::RankDeficientChannel)?;
    let diag = chol.l_dirty().diagonal();
    let (dmin, dmax) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.re), hi.max(d.re)));
    if !(dmin > 1e-6 * dmax) {
        return Err(Error::RankDeficientChannel);
    }
    let w = hh * chol.inverse() * Complex64::new(power.sqrt(), 0.0);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficientChannel);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSetup {
    /// Target average SNR at every UE, dB.
    pub snr_db: f64,
    /// Symbol vectors per realization.
    pub n_sym: usize,
    /// Adds UE receiver noise; disabling it isolates distortion and
    /// interference.
    pub add_noise: bool,
    /// Variance of additive UL channel-estimation noise (0 = perfect CSI).
    pub csi_noise_var: f64,
}

impl Default for LinkSetup {
    fn default() -> Self {
        Self { snr_db: 10.0, n_sym: 1000, add_noise: true, csi_noise_var: 0.0 }
    }
}

/// Per-UE outcome of one downlink realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub sinr: Vec<f64>,
    pub rate: Vec<f64>,
    /// Predistorter inputs that were out of range and clamped.
    pub saturated: u64,
}

/// One row of the rate results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSample {
    pub trial: usize,
    pub ue: usize,
    pub sinr: f64,
    pub rate: f64,
}

/// Simulates `setup.n_sym` downlink symbol vectors over one realization.
///
/// Precoder columns are scaled so that, with the chains linearized to
/// `1/q_m`, UE `k` receives its desired signal at `setup.snr_db` above its
/// noise power. Symbols and noise come from a stream keyed by `seed` only, so
/// pipelines evaluated with the same seed see identical draws.
pub fn evaluate_link(
    bs: &BsHardware,
    ue: &UeHardware,
    chan: &ChannelRealization,
    dpd: &[DpdInverse],
    cal: &CalibrationVector,
    setup: &LinkSetup,
    seed: u64,
) -> Result<LinkReport> {
    let (m, k) = chan.h.shape();
    if dpd.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: dpd.len() });
    }
    if setup.n_sym == 0 {
        return Err(Error::InvalidParameter { name: "n_sym", reason: "must be positive".into() });
    }
    let mut h_ul = chan.ul_channel(bs, ue)?;
    if setup.csi_noise_var > 0.0 {
        let mut rng = rng::seeded(rng::child_seed(seed, tag::CSI_NOISE, 0));
        h_ul.iter_mut().for_each(|v| *v += rng::complex_normal(&mut rng, setup.csi_noise_var));
    }
    let h_dl_est = apply_calibration(cal, &h_ul)?;
    let w0 = zf_precoder(&h_dl_est, 1.0)?;

    // G[k][m] = r_U,k · H[m,k]: true downlink propagation including UE receivers
    let g: Vec<Complex64> = (0..k)
        .flat_map(|kk| (0..m).map(move |mm| (kk, mm)))
        .map(|(kk, mm)| ue.rx_gain()[kk] * chan.h[(mm, kk)])
        .collect();

    let t_lin = linearized_chain_gain(&q_factors(bs.rx()))?;
    let snr = 10f64.powf(setup.snr_db / 10.0);
    let mut w = vec![Complex64::new(0.0, 0.0); m * k];
    for kk in 0..k {
        let a0: Complex64 = (0..m).map(|mm| g[kk * m + mm] * t_lin[mm] * w0[(mm, kk)]).sum();
        if a0.norm() == 0.0 {
            return Err(Error::ZeroDivisor("precoder power scaling"));
        }
        let gamma = (snr * ue.noise_power()[kk]).sqrt() / a0.norm();
        for mm in 0..m {
            w[mm * k + kk] = w0[(mm, kk)] * gamma;
        }
    }

    let mut rng = rng::seeded(rng::child_seed(seed, tag::SYMBOLS, 0));
    let n = setup.n_sym;
    let mut s_buf = vec![Complex64::new(0.0, 0.0); n * k];
    let mut y_buf = vec![Complex64::new(0.0, 0.0); n * k];
    let mut z = vec![Complex64::new(0.0, 0.0); m];
    let mut saturated = 0u64;
    for t in 0..n {
        let s = &mut s_buf[t * k..(t + 1) * k];
        for v in s.iter_mut() {
            *v = rng::complex_normal(&mut rng, 1.0);
        }
        for (mm, zm) in z.iter_mut().enumerate() {
            let u: Complex64 = (0..k).map(|kk| w[mm * k + kk] * s[kk]).sum();
            let (x, sat) = dpd[mm].apply_counted(u);
            saturated += sat as u64;
            *zm = bs.tx()[mm].apply(x);
        }
        for kk in 0..k {
            let noise = rng::complex_normal(&mut rng, ue.noise_power()[kk]);
            let clean: Complex64 = g[kk * m..(kk + 1) * m].iter().zip(&z).map(|(a, b)| a * b).sum();
            y_buf[t * k + kk] = clean + if setup.add_noise { noise } else { Complex64::new(0.0, 0.0) };
        }
    }

    let mut sinr = Vec::with_capacity(k);
    let mut rate = Vec::with_capacity(k);
    for kk in 0..k {
        let (mut ys, mut ss) = (Complex64::new(0.0, 0.0), 0.0);
        for t in 0..n {
            let (y, s) = (y_buf[t * k + kk], s_buf[t * k + kk]);
            ys += y * s.conj();
            ss += s.norm_sqr();
        }
        let a = ys / ss;
        let resid: f64 = (0..n).map(|t| (y_buf[t * k + kk] - a * s_buf[t * k + kk]).norm_sqr()).sum();
        let value = a.norm_sqr() * ss / resid.max(f64::MIN_POSITIVE);
        sinr.push(value);
        rate.push((1.0 + value).log2());
    }
    Ok(LinkReport { sinr, rate, saturated })
}

/// One step of an empirical CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfPoint {
    pub rate: f64,
    pub prob: f64,
}

/// Empirical CDF of the rates of UE `ue` across all samples.
pub fn rate_cdf(samples: &[RateSample], ue: usize) -> Result<Vec<CdfPoint>> {
    let mut rates: Vec<f64> = samples.iter().filter(|s| s.ue == ue).map(|s| s.rate).collect();
    if rates.is_empty() {
        return Err(Error::InvalidParameter { name: "samples", reason: format!("no samples for UE {ue}") });
    }
    rates.sort_by(f64::total_cmp);
    let n = rates.len() as f64;
    Ok(rates.into_iter().enumerate().map(|(i, rate)| CdfPoint { rate, prob: (i + 1) as f64 / n }).collect())
}

/// Median of the rates in a CDF table.
pub fn cdf_median(cdf: &[CdfPoint]) -> f64 {
    let n = cdf.len();
    if n % 2 == 1 {
        cdf[n / 2].rate
    } else {
        0.5 * (cdf[n / 2 - 1].rate + cdf[n / 2].rate)
    }
}
