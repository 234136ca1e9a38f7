//! Predistorter construction: the inverse of the fitted chain
//! `f̃(x) = θ1·x + θ2·x|x|²`.
//!
//! The model is phase equivariant, so inversion reduces to the amplitude
//! equation `ρ·|θ1 + θ2ρ²| = |u|` followed by a phase correction
//! `−arg(θ1 + θ2ρ²)`. The exact mode solves the amplitude equation per
//! sample; the LUT mode tabulates it on `L` output amplitudes uniformly spaced
//! over `[0, v_max]` and interpolates linearly, which models a finite-size
//! predistorter.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::{amplitude_monotone, amplitude_turning_point, cubic_amplitude, PaParams};
use crate::ota_dpd::ThetaEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpdMode {
    Exact,
    Lut,
}

#[derive(Debug, Clone, PartialEq)]
struct Lut {
    step: f64,
    rho_in: Vec<f64>,
    /// Unwrapped `−arg(θ1 + θ2ρ²)` at each entry.
    phase: Vec<f64>,
}

/// Per-antenna inverse `g = f̃⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpdInverse {
    mode: DpdMode,
    theta: ThetaEstimate,
    v_max: f64,
    /// Input amplitude and output amplitude at the turning point, if any.
    peak: Option<(f64, f64)>,
    lut: Option<Lut>,
}

/// Solves `ρ·|a1 + a3ρ²| = v` for `ρ` on the increasing branch.
///
/// Works on `P(s) = s·|a1 + a3 s|²` with `s = ρ²`, a cubic whose derivative
/// is known in closed form. Newton steps are kept inside a shrinking
/// bisection bracket, so convergence never relies on the Newton step.
fn solve_amplitude(a1: Complex64, a3: Complex64, v: f64, s_max: Option<f64>) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let target = v * v;
    let p = |s: f64| s * (a1 + a3 * s).norm_sqr();
    let dp = |s: f64| a1.norm_sqr() + 4.0 * (a1.conj() * a3).re * s + 3.0 * a3.norm_sqr() * s * s;

    let mut lo = 0.0;
    let mut hi = match s_max {
        Some(s) => s,
        None => {
            let mut hi = (target / a1.norm_sqr()).max(1e-300) * 2.0;
            while p(hi) < target {
                hi *= 2.0;
            }
            hi
        }
    };
    let mut s = (target / a1.norm_sqr()).clamp(lo, hi);
    for _ in 0..200 {
        let f = p(s) - target;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let mut next = s - f / dp(s);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 4.0 * f64::EPSILON * next || hi - lo <= 4.0 * f64::EPSILON * hi {
            s = next;
            break;
        }
        s = next;
    }
    s.sqrt()
}

/// Builds the inverse of `theta` over output amplitudes `[0, v_max]`.
///
/// Fails when the amplitude map is not strictly increasing on the preimage of
/// `[0, v_max]`. `lut_size` is ignored in exact mode and must be ≥ 2 in LUT
/// mode.
pub fn build_inverse(theta: ThetaEstimate, mode: DpdMode, lut_size: usize, v_max: f64) -> Result<DpdInverse> {
    if !(v_max > 0.0 && v_max.is_finite()) {
        return Err(Error::InvalidParameter { name: "v_max", reason: format!("must be positive, got {v_max}") });
    }
    let (a1, a3) = (theta.theta1, theta.theta2);
    let peak = amplitude_turning_point(a1, a3).map(|rho| (rho, cubic_amplitude(a1, a3, rho)));
    if let Some((_, amp)) = peak {
        if v_max >= amp {
            return Err(Error::NotInvertible { range: v_max });
        }
    }
    let s_max = peak.map(|(rho, _)| rho * rho);
    let rho_top = solve_amplitude(a1, a3, v_max, s_max);
    if !amplitude_monotone(a1, a3, rho_top) {
        return Err(Error::NotInvertible { range: v_max });
    }

    let lut = match mode {
        DpdMode::Exact => None,
        DpdMode::Lut => {
            if lut_size < 2 {
                return Err(Error::InvalidParameter { name: "lut_size", reason: "at least 2 entries".into() });
            }
            let step = v_max / (lut_size - 1) as f64;
            let rho_in: Vec<f64> =
                (0..lut_size).map(|k| solve_amplitude(a1, a3, step * k as f64, s_max)).collect();
            let mut phase = Vec::with_capacity(lut_size);
            let mut prev = 0.0;
            for (k, &rho) in rho_in.iter().enumerate() {
                let raw = -(a1 + a3 * (rho * rho)).arg();
                let ph = if k == 0 {
                    raw
                } else {
                    let mut d = raw - prev;
                    d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
                    prev + d
                };
                phase.push(ph);
                prev = ph;
            }
            Some(Lut { step, rho_in, phase })
        }
    };
    Ok(DpdInverse { mode, theta, v_max, peak, lut })
}

impl DpdInverse {
    pub fn mode(&self) -> DpdMode {
        self.mode
    }

    pub fn theta(&self) -> ThetaEstimate {
        self.theta
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn lut_size(&self) -> Option<usize> {
        self.lut.as_ref().map(|l| l.rho_in.len())
    }

    /// `g(u)`.
    #[inline]
    pub fn apply(&self, u: Complex64) -> Complex64 {
        self.apply_counted(u).0
    }

    /// `g(u)` together with a flag that is set when `|u|` was out of range and
    /// had to be clamped.
    ///
    /// LUT mode clamps at `v_max`. Exact mode solves directly and only clamps
    /// at the peak of the amplitude map, past which no preimage exists.
    pub fn apply_counted(&self, u: Complex64) -> (Complex64, bool) {
        let v = u.norm();
        if v == 0.0 {
            return (Complex64::new(0.0, 0.0), false);
        }
        let (a1, a3) = (self.theta.theta1, self.theta.theta2);
        match &self.lut {
            None => {
                let (v_eff, saturated, s_max) = match self.peak {
                    Some((rho, amp)) if v >= amp => (amp * (1.0 - 1e-12), true, Some(rho * rho)),
                    Some((rho, _)) => (v, false, Some(rho * rho)),
                    None => (v, false, None),
                };
                let rho = solve_amplitude(a1, a3, v_eff, s_max);
                let w = a1 + a3 * (rho * rho);
                // ρ·|w| = v_eff, so u/w has amplitude ρ when unclamped
                (u * (v_eff / v) / w, saturated)
            }
            Some(lut) => {
                let saturated = v > self.v_max;
                let vc = v.min(self.v_max);
                let pos = vc / lut.step;
                let k = (pos.floor() as usize).min(lut.rho_in.len() - 2);
                let frac = pos - k as f64;
                let rho = lut.rho_in[k] + frac * (lut.rho_in[k + 1] - lut.rho_in[k]);
                let ph = lut.phase[k] + frac * (lut.phase[k + 1] - lut.phase[k]);
                (u / v * Complex64::from_polar(rho, ph), saturated)
            }
        }
    }
}

/// Free-function form of [`DpdInverse::apply`].
#[inline]
pub fn apply_dpd(inv: &DpdInverse, u: Complex64) -> Complex64 {
    inv.apply(u)
}

/// Output amplitude of the fitted chain at the hardware operating limit, the
/// default LUT range.
pub fn default_v_max(theta: &ThetaEstimate, rho_max: f64) -> f64 {
    cubic_amplitude(theta.theta1, theta.theta2, rho_max)
}

/// Residual linear TX gain `1/q_m` left after perfect predistortion.
pub fn linearized_chain_gain(q: &[Complex64]) -> Result<Vec<Complex64>> {
    q.iter()
        .map(|&qm| {
            if qm.norm() == 0.0 {
                Err(Error::ZeroDivisor("linearized_chain_gain"))
            } else {
                Ok(1.0 / qm)
            }
        })
        .collect()
}

/// Complex gain `f(g(a))/a` of the predistorted chain at real amplitude `a`.
pub fn effective_gain(pa: &PaParams, inv: &DpdInverse, amplitude: f64) -> Complex64 {
    let a = Complex64::new(amplitude, 0.0);
    pa.apply(inv.apply(a)) / a
}

/// NMSE in dB of `f(g(u))` against the ideal linear output `u/q`.
pub fn linearization_nmse_db(pa: &PaParams, q: Complex64, inv: &DpdInverse, inputs: &[Complex64]) -> f64 {
    let (mut err, mut sig) = (0.0, 0.0);
    for &u in inputs {
        let ideal = u / q;
        err += (pa.apply(inv.apply(u)) - ideal).norm_sqr();
        sig += ideal.norm_sqr();
    }
    10.0 * (err / sig).log10()
}
