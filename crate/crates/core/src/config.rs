//! Run configuration: a TOML document with one table per subsystem.
//!
//! Every key has a default, so an empty document is a valid configuration.
//! Unknown keys are rejected, and values outside their documented bounds
//! produce an error naming the key and the bound.

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingConfig;
use crate::dpd_inverse::DpdMode;
use crate::error::{Error, Result};
use crate::experiment::Variant;
use crate::hardware::{HardwareConfig, UeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// BS antennas M.
    pub antennas: usize,
    /// Single-antenna users K.
    pub users: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { antennas: 100, users: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpdConfig {
    /// OTA pilots per antenna, N_dpd.
    pub n_dpd: usize,
    /// Lowest pilot amplitude as a multiple of `hardware.rho_ref`.
    pub pilot_amp_lo: f64,
    /// Highest pilot amplitude as a multiple of `hardware.rho_ref`.
    pub pilot_amp_hi: f64,
    pub mode: DpdMode,
    pub lut_size: usize,
    /// Fixes the OTA SNR of the characterization stage, overriding the
    /// experiment's OTA SNR.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ota_snr_db: Option<f64>,
}

impl Default for DpdConfig {
    fn default() -> Self {
        Self { n_dpd: 500, pilot_amp_lo: 0.25, pilot_amp_hi: 1.2, mode: DpdMode::Lut, lut_size: 256, ota_snr_db: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalConfig {
    /// Calibration pilots per link direction, N_cal.
    pub n_cal: usize,
    /// Constant pilot amplitude at the predistorter input.
    pub pilot_amplitude: f64,
    /// Fixes the OTA SNR of the calibration stage.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ota_snr_db: Option<f64>,
}

impl Default for CalConfig {
    fn default() -> Self {
        Self { n_cal: 500, pilot_amplitude: 0.5, ota_snr_db: None }
    }
}

impl CalConfig {
    pub fn pilot_power(&self) -> f64 {
        self.pilot_amplitude * self.pilot_amplitude
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownlinkConfig {
    /// Average SNR at every UE, dB.
    pub snr_db: f64,
    /// Symbol vectors per realization.
    pub n_sym: usize,
    /// Channel realizations for the rate CDF.
    pub realizations: usize,
    /// OTA link SNR used for both stages in the rate study, dB.
    pub ota_snr_db: f64,
    /// UE whose rate CDF is reported.
    pub ue_index: usize,
    /// Variance of UL channel-estimation noise; 0 means perfect UL CSI.
    pub csi_noise_var: f64,
}

impl Default for DownlinkConfig {
    fn default() -> Self {
        Self { snr_db: 10.0, n_sym: 1000, realizations: 10_000, ota_snr_db: 0.0, ue_index: 0, csi_noise_var: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// OTA link SNR grid of the MSE sweep, dB.
    pub ota_snr_grid_db: Vec<f64>,
    /// Trials per MSE grid point.
    pub trials: usize,
    pub n_dpd_grid: Vec<usize>,
    pub n_cal_grid: Vec<usize>,
    pub mse_variants: Vec<Variant>,
    pub rate_variants: Vec<Variant>,
    /// Reuse one hardware draw for every MSE trial.
    pub fixed_hardware: bool,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ota_snr_grid_db: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
            trials: 500,
            n_dpd_grid: vec![500],
            n_cal_grid: vec![200, 500, 2000],
            mse_variants: vec![Variant::Proposed, Variant::IdealDpd],
            rate_variants: vec![Variant::PerfectCsi, Variant::Proposed, Variant::IdealDpd, Variant::NoCal],
            fixed_hardware: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub seed: u64,
    pub output_dir: String,
    pub array: ArrayConfig,
    pub hardware: HardwareConfig,
    pub ue: UeConfig,
    pub coupling: CouplingConfig,
    pub dpd: DpdConfig,
    pub calibration: CalConfig,
    pub downlink: DownlinkConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            seed: 1,
            output_dir: "results".into(),
            array: ArrayConfig::default(),
            hardware: HardwareConfig::default(),
            ue: UeConfig::default(),
            coupling: CouplingConfig::default(),
            dpd: DpdConfig::default(),
            calibration: CalConfig::default(),
            downlink: DownlinkConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn check(ok: bool, key: &str, bound: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfBounds { key: key.into(), bound: bound() })
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.array;
        check(a.antennas >= 2, "array.antennas", || format!(">= 2 (got {})", a.antennas))?;
        check(a.users >= 1 && a.users <= a.antennas, "array.users", || {
            format!("1 <= users <= antennas (got {}, antennas {})", a.users, a.antennas)
        })?;

        let h = &self.hardware;
        check(h.rho_ref > 0.0 && finite(h.rho_ref), "hardware.rho_ref", || format!("> 0 (got {})", h.rho_ref))?;
        check(h.rho_max_factor >= 1.0 && finite(h.rho_max_factor), "hardware.rho_max_factor", || {
            format!(">= 1 (got {})", h.rho_max_factor)
        })?;
        check(h.compression_db >= 0.0 && h.compression_db < 6.0, "hardware.compression_db", || {
            format!("in [0, 6) (got {})", h.compression_db)
        })?;
        for (key, v) in [("hardware.rx_amp_spread", h.rx_amp_spread), ("hardware.tx_amp_spread", h.tx_amp_spread)] {
            check((0.0..1.0).contains(&v), key, || format!("in [0, 1) (got {v})"))?;
        }
        for (key, v) in [("hardware.rx_phase_spread", h.rx_phase_spread), ("hardware.tx_phase_spread", h.tx_phase_spread)]
        {
            check((0.0..=std::f64::consts::PI).contains(&v), key, || format!("in [0, pi] (got {v})"))?;
        }
        check(h.fixed_t[0] != 0.0 || h.fixed_t[1] != 0.0, "hardware.fixed_t", || "nonzero".into())?;

        let u = &self.ue;
        check(u.noise_power > 0.0 && finite(u.noise_power), "ue.noise_power", || format!("> 0 (got {})", u.noise_power))?;
        check((0.0..1.0).contains(&u.gain_amp_spread), "ue.gain_amp_spread", || {
            format!("in [0, 1) (got {})", u.gain_amp_spread)
        })?;

        let c = &self.coupling;
        check(c.slope_db_per_index <= 0.0, "coupling.slope_db_per_index", || {
            format!("<= 0 (got {})", c.slope_db_per_index)
        })?;
        check(finite(c.intercept_db), "coupling.intercept_db", || "finite".into())?;

        let d = &self.dpd;
        check(d.n_dpd >= 2, "dpd.n_dpd", || format!(">= 2 (got {})", d.n_dpd))?;
        check(d.lut_size >= 2, "dpd.lut_size", || format!(">= 2 (got {})", d.lut_size))?;
        check(d.pilot_amp_lo > 0.0 && d.pilot_amp_lo < d.pilot_amp_hi, "dpd.pilot_amp_lo", || {
            format!("0 < pilot_amp_lo < pilot_amp_hi (got {}, {})", d.pilot_amp_lo, d.pilot_amp_hi)
        })?;
        check(d.pilot_amp_hi <= h.rho_max_factor, "dpd.pilot_amp_hi", || {
            format!("<= hardware.rho_max_factor = {} (got {})", h.rho_max_factor, d.pilot_amp_hi)
        })?;

        let cal = &self.calibration;
        check(cal.n_cal >= 2, "calibration.n_cal", || format!(">= 2 (got {})", cal.n_cal))?;
        check(cal.pilot_amplitude > 0.0 && cal.pilot_amplitude <= h.rho_ref, "calibration.pilot_amplitude", || {
            format!("in (0, hardware.rho_ref = {}] (got {})", h.rho_ref, cal.pilot_amplitude)
        })?;

        let dl = &self.downlink;
        check(finite(dl.snr_db), "downlink.snr_db", || "finite".into())?;
        check(dl.n_sym >= 1000, "downlink.n_sym", || format!(">= 1000 (got {})", dl.n_sym))?;
        check(dl.realizations >= 1, "downlink.realizations", || format!(">= 1 (got {})", dl.realizations))?;
        check(dl.ue_index < a.users, "downlink.ue_index", || format!("< users = {} (got {})", a.users, dl.ue_index))?;
        check(dl.csi_noise_var >= 0.0, "downlink.csi_noise_var", || format!(">= 0 (got {})", dl.csi_noise_var))?;

        let e = &self.experiment;
        check(!e.ota_snr_grid_db.is_empty(), "experiment.ota_snr_grid_db", || "non-empty".into())?;
        check(e.ota_snr_grid_db.iter().all(|v| finite(*v)), "experiment.ota_snr_grid_db", || "finite values".into())?;
        check(e.trials >= 1, "experiment.trials", || format!(">= 1 (got {})", e.trials))?;
        check(!e.n_dpd_grid.is_empty() && e.n_dpd_grid.iter().all(|&n| n >= 2), "experiment.n_dpd_grid", || {
            "non-empty, every entry >= 2".into()
        })?;
        check(!e.n_cal_grid.is_empty() && e.n_cal_grid.iter().all(|&n| n >= 2), "experiment.n_cal_grid", || {
            "non-empty, every entry >= 2".into()
        })?;
        check(!e.mse_variants.is_empty(), "experiment.mse_variants", || "non-empty".into())?;
        check(!e.rate_variants.is_empty(), "experiment.rate_variants", || "non-empty".into())?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses and validates a TOML configuration, applying defaults for absent keys.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
