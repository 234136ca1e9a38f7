//! Built-in consistency checks run by `otacal selftest`.
//!
//! Each check is a small closed-form instance whose answer is known in
//! advance. The suite is fast and independent of any config file.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::parse_config;
use crate::coupling::{build_coupling, combined_noise_variance, n0_from_link_snr, CouplingConfig, CouplingMatrix};
use crate::downlink::{evaluate_link, rate_cdf, sample_channel, zf_precoder, LinkSetup, RateSample};
use crate::dpd_inverse::{build_inverse, default_v_max, linearized_chain_gain, DpdInverse, DpdMode};
use crate::hardware::{paper_rx_gain, sample_bs_hardware, BsHardware, HardwareConfig, PaParams, UeHardware};
use crate::ota_dpd::{characterize_array, estimate_theta, make_dpd_pilots, q_factor, q_factors, ThetaEstimate};
use crate::reciprocity::{
    calibration_mse, estimate_calibration, estimate_gain_product, simulate_cal_measurements, CalibrationVector,
};

type Check = fn() -> Result<(), String>;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got}, want {want} ± {tol}"))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn pa_substitution() -> Result<(), String> {
    let pa = PaParams::new(c(1.0, 0.0), c(-0.1, 0.0), 1.5).map_err(err)?;
    close((pa.apply(c(1.0, 0.0)) - c(0.9, 0.0)).norm(), 0.0, 1e-15, "f(1)")?;
    close(pa.apply(c(0.0, 0.0)).norm(), 0.0, 0.0, "f(0)")
}

fn rx_gain_midpoint() -> Result<(), String> {
    close((paper_rx_gain(49, 100) - c(0.8, 0.0)).norm(), 0.0, 1e-12, "r_50")
}

fn coupling_decay() -> Result<(), String> {
    let h = build_coupling(&CouplingConfig::default(), 12, 3).map_err(err)?;
    close(h.get(0, 10).norm(), 10f64.powf(-25.0 / 20.0), 1e-12, "|h| at distance 10")?;
    ensure(h.get(3, 7) == h.get(7, 3), || "coupling not symmetric".into())
}

fn noise_variance_substitution() -> Result<(), String> {
    let h = CouplingMatrix::from_upper(3, |i, j| match (i, j) {
        (0, 1) => c(1.0, 0.0),
        (0, 2) => c(0.5, 0.0),
        _ => c(1.0, 0.0),
    })
    .map_err(err)?;
    close(combined_noise_variance(&h, 0, 4.0), 5.0, 1e-12, "combined variance")?;
    let flat = CouplingMatrix::from_upper(2, |_, _| c(0.1, 0.0)).map_err(err)?;
    close(n0_from_link_snr(&flat, 1.0, 20.0), 1e-4, 1e-16, "N0 at 20 dB")
}

fn q_average() -> Result<(), String> {
    let r = [c(5.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
    close((q_factor(&r, 0) - c(3.0, 0.0)).norm(), 0.0, 1e-15, "q_1")
}

fn theta_two_by_two() -> Result<(), String> {
    let th = estimate_theta(&[c(0.9, 0.0), c(1.2, 0.0)], &[c(1.0, 0.0), c(2.0, 0.0)]).map_err(err)?;
    close((th.theta1 - c(1.0, 0.0)).norm(), 0.0, 1e-12, "theta1")?;
    close((th.theta2 - c(-0.1, 0.0)).norm(), 0.0, 1e-12, "theta2")
}

fn inverse_bisection_oracle() -> Result<(), String> {
    let th = ThetaEstimate::new(c(1.0, 0.0), c(-0.1, 0.0)).map_err(err)?;
    let inv = build_inverse(th, DpdMode::Exact, 0, default_v_max(&th, 1.0)).map_err(err)?;
    let v = 0.7488;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * (1.0 - 0.1 * mid * mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    close(inv.apply(c(v, 0.0)).re, 0.5 * (lo + hi), 1e-9, "g(0.7488)")
}

fn chain_gain_reciprocal() -> Result<(), String> {
    let g = linearized_chain_gain(&[c(2.0, 0.0); 3]).map_err(err)?;
    ensure(g.iter().all(|v| (v - c(0.5, 0.0)).norm() < 1e-15), || format!("{g:?}"))
}

fn gain_product() -> Result<(), String> {
    let v = estimate_gain_product(c(6.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)).map_err(err)?;
    close((v - c(3.0, 0.0)).norm(), 0.0, 1e-15, "y/(h x)")
}

fn calibration_diagonal_scaling() -> Result<(), String> {
    let cal = CalibrationVector::new(vec![c(1.0, 0.0), c(0.0, 2.0)]).map_err(err)?;
    let h = DMatrix::from_element(2, 1, c(1.0, 0.0));
    let out = crate::reciprocity::apply_calibration(&cal, &h).map_err(err)?;
    close((out[(0, 1)] - c(0.0, 2.0)).norm() + (out[(0, 0)] - c(1.0, 0.0)).norm(), 0.0, 1e-15, "c ⊙ H")
}

fn mse_single_entry() -> Result<(), String> {
    let truth = CalibrationVector::identity(101);
    let mut est = vec![c(1.0, 0.0); 101];
    est[5] += c(0.3, 0.0);
    let est = CalibrationVector::new(est).map_err(err)?;
    close(calibration_mse(&est, &truth), 0.09 / 100.0, 1e-15, "MSE")
}

fn noiseless_pipeline() -> Result<(), String> {
    let m = 8;
    let hw = sample_bs_hardware(&HardwareConfig::default(), m, 11).map_err(err)?;
    let h = build_coupling(&CouplingConfig::default(), m, 12).map_err(err)?;
    let pilots = make_dpd_pilots(m, 64, 0.25, 1.2, 13).map_err(err)?;
    let thetas = characterize_array(&hw, &h, &pilots, 0.0, 14).map_err(err)?;
    let q = q_factors(hw.rx());
    for (i, (th, pa)) in thetas.iter().zip(hw.tx()).enumerate() {
        let want = ThetaEstimate::exact(pa, q[i]);
        let rel = (th.theta1 - want.theta1).norm() / want.theta1.norm()
            + (th.theta2 - want.theta2).norm() / want.theta2.norm().max(1e-300);
        ensure(rel < 1e-9, || format!("antenna {i}: relative error {rel:e}"))?;
    }
    let t = linearized_chain_gain(&q).map_err(err)?;
    let truth = CalibrationVector::from_chains(&t, hw.rx()).map_err(err)?;
    let meas = simulate_cal_measurements(&t, hw.rx(), &h, 16, 0.25, 0.0, 15).map_err(err)?;
    let est = estimate_calibration(&meas, &h).map_err(err)?;
    let mse = calibration_mse(&est, &truth);
    ensure(mse < 1e-18, || format!("calibration MSE {mse:e}"))
}

fn zf_nulling() -> Result<(), String> {
    let chan = sample_channel(6, 3, 21).map_err(err)?;
    let h = chan.h.transpose();
    let w = zf_precoder(&h, 1.0).map_err(err)?;
    let hw = &h * &w;
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            ensure((hw[(i, j)] - c(want, 0.0)).norm() < 1e-10, || format!("(H W)[{i},{j}] = {}", hw[(i, j)]))?;
        }
    }
    Ok(())
}

fn exact_dpd(hw: &BsHardware) -> Result<Vec<DpdInverse>, String> {
    let q = q_factors(hw.rx());
    hw.tx()
        .iter()
        .zip(&q)
        .map(|(pa, &qm)| {
            let th = ThetaEstimate::exact(pa, qm);
            build_inverse(th, DpdMode::Exact, 0, default_v_max(&th, 1.2)).map_err(err)
        })
        .collect()
}

fn noiseless_downlink() -> Result<(), String> {
    let m = 8;
    let hw = sample_bs_hardware(&HardwareConfig::default(), m, 31).map_err(err)?;
    let ue = UeHardware::ideal(2, 0.1).map_err(err)?;
    let chan = sample_channel(m, 2, 32).map_err(err)?;
    let q = q_factors(hw.rx());
    let cal = CalibrationVector::from_chains(&linearized_chain_gain(&q).map_err(err)?, hw.rx()).map_err(err)?;
    let setup = LinkSetup { add_noise: false, n_sym: 200, ..LinkSetup::default() };
    let rep = evaluate_link(&hw, &ue, &chan, &exact_dpd(&hw)?, &cal, &setup, 33).map_err(err)?;
    ensure(rep.rate.iter().all(|&r| r > 30.0), || format!("rates {:?}", rep.rate))
}

fn cdf_step() -> Result<(), String> {
    let samples: Vec<RateSample> = (0..4).map(|t| RateSample { trial: t, ue: 0, sinr: 1.0, rate: 1.0 }).collect();
    let cdf = rate_cdf(&samples, 0).map_err(err)?;
    ensure(cdf.iter().all(|p| p.rate == 1.0), || "non-constant CDF".into())?;
    close(cdf.last().map(|p| p.prob).unwrap_or(0.0), 1.0, 0.0, "final probability")
}

fn config_defaults() -> Result<(), String> {
    let cfg = parse_config("").map_err(err)?;
    ensure(cfg.array.antennas == 100 && cfg.array.users == 10, || "array defaults".into())?;
    ensure(cfg.dpd.n_dpd == 500 && cfg.calibration.n_cal == 500, || "pilot defaults".into())?;
    ensure(parse_config("[array]\nantennas = 1\n").is_err(), || "M=1 accepted".into())?;
    let e = parse_config("foo = 1\n").map(|_| ()).map_err(err).err().unwrap_or_default();
    ensure(e.contains("foo"), || format!("unknown key message: {e:?}"))
}

pub const CHECKS: &[(&str, Check)] = &[
    ("pa-substitution", pa_substitution),
    ("rx-gain-midpoint", rx_gain_midpoint),
    ("coupling-decay", coupling_decay),
    ("noise-variance-substitution", noise_variance_substitution),
    ("q-average", q_average),
    ("theta-two-by-two", theta_two_by_two),
    ("inverse-bisection-oracle", inverse_bisection_oracle),
    ("chain-gain-reciprocal", chain_gain_reciprocal),
    ("gain-product", gain_product),
    ("calibration-diagonal-scaling", calibration_diagonal_scaling),
    ("mse-single-entry", mse_single_entry),
    ("noiseless-pipeline", noiseless_pipeline),
    ("zf-nulling", zf_nulling),
    ("noiseless-downlink", noiseless_downlink),
    ("cdf-step", cdf_step),
    ("config-defaults", config_defaults),
];

pub fn run_selftest() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| match check() {
            Ok(()) => CheckOutcome { name, passed: true, detail: String::new() },
            Err(detail) => CheckOutcome { name, passed: false, detail },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let failed: Vec<_> = run_selftest().into_iter().filter(|o| !o.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}
