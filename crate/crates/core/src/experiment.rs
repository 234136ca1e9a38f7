//! Experiment orchestration: the calibration-error sweep over OTA SNR and the
//! downlink rate CDF, each across pipeline variants.
//!
//! Trials are independent work units scheduled on a rayon pool. Each trial
//! draws its randomness from seeds derived from `(master seed, tag, trial)`,
//! and results are merged in trial order, so output does not depend on the
//! number of workers.
//!
//! Variants that are compared within a trial share hardware, pilots and noise
//! draws. Their differences are then due to the pipeline, not to sampling.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CalConfig, DownlinkConfig, DpdConfig, RunConfig};
use crate::coupling::{build_coupling, n0_from_link_snr, CouplingConfig, CouplingMatrix};
use crate::downlink::{cdf_median, evaluate_link, rate_cdf, sample_channel, CdfPoint, LinkSetup, RateSample};
use crate::dpd_inverse::{build_inverse, default_v_max, effective_gain, linearized_chain_gain, DpdInverse, DpdMode};
use crate::error::{Error, Result};
use crate::hardware::{sample_bs_hardware, sample_ue_hardware, BsHardware, HardwareConfig, UeConfig};
use crate::ota_dpd::{characterize_array, make_dpd_pilots, q_factors, ThetaEstimate};
use crate::reciprocity::{
    calibration_mse, estimate_calibration, simulate_cal_measurements, CalibrationVector,
};
use crate::rng::{child_seed, tag};

/// Pipeline variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// OTA-estimated non-linearity, LUT (or configured) predistorter, OTA calibration.
    Proposed,
    /// Perfect predistortion followed by OTA calibration.
    #[serde(alias = "perfect-dpd-cal")]
    IdealDpd,
    /// Perfect predistortion and the true calibration vector.
    PerfectCsi,
    /// Perfect predistortion, no calibration.
    NoCal,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Proposed, Variant::IdealDpd, Variant::PerfectCsi, Variant::NoCal];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::IdealDpd => "ideal-dpd",
            Variant::PerfectCsi => "perfect-csi",
            Variant::NoCal => "no-cal",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Variant::Proposed),
            "ideal-dpd" | "perfect-dpd-cal" => Ok(Variant::IdealDpd),
            "perfect-csi" => Ok(Variant::PerfectCsi),
            "no-cal" => Ok(Variant::NoCal),
            other => Err(Error::UnknownVariant(other.into())),
        }
    }
}

/// Everything an experiment needs, resolved from a [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub master_seed: u64,
    pub antennas: usize,
    pub users: usize,
    pub ota_snr_grid_db: Vec<f64>,
    pub n_dpd_grid: Vec<usize>,
    pub n_cal_grid: Vec<usize>,
    pub trials: usize,
    pub realizations: usize,
    pub variants: Vec<Variant>,
    pub fixed_hardware: bool,
    pub workers: usize,
    pub hardware: HardwareConfig,
    pub ue: UeConfig,
    pub coupling: CouplingConfig,
    pub dpd: DpdConfig,
    pub calibration: CalConfig,
    pub downlink: DownlinkConfig,
}

impl ExperimentSpec {
    fn from_config(cfg: &RunConfig, variants: Vec<Variant>) -> Result<Self> {
        cfg.validate()?;
        let mut variants = variants;
        variants.dedup();
        if variants.is_empty() {
            return Err(Error::InvalidParameter { name: "variants", reason: "at least one variant".into() });
        }
        Ok(Self {
            scenario: cfg.scenario.clone(),
            master_seed: cfg.seed,
            antennas: cfg.array.antennas,
            users: cfg.array.users,
            ota_snr_grid_db: cfg.experiment.ota_snr_grid_db.clone(),
            n_dpd_grid: cfg.experiment.n_dpd_grid.clone(),
            n_cal_grid: cfg.experiment.n_cal_grid.clone(),
            trials: cfg.experiment.trials,
            realizations: cfg.downlink.realizations,
            variants,
            fixed_hardware: cfg.experiment.fixed_hardware,
            workers: cfg.experiment.workers,
            hardware: cfg.hardware.clone(),
            ue: cfg.ue.clone(),
            coupling: cfg.coupling.clone(),
            dpd: cfg.dpd.clone(),
            calibration: cfg.calibration.clone(),
            downlink: cfg.downlink.clone(),
        })
    }

    /// Spec for the MSE sweep, using `experiment.mse_variants`.
    pub fn mse_sweep(cfg: &RunConfig) -> Result<Self> {
        Self::from_config(cfg, cfg.experiment.mse_variants.clone())
    }

    /// Spec for the rate study, using `experiment.rate_variants`.
    pub fn rate_cdf(cfg: &RunConfig) -> Result<Self> {
        Self::from_config(cfg, cfg.experiment.rate_variants.clone())
    }

    pub fn with_variants(mut self, variants: Vec<Variant>) -> Result<Self> {
        if variants.is_empty() {
            return Err(Error::InvalidParameter { name: "variants", reason: "at least one variant".into() });
        }
        self.variants = variants;
        Ok(self)
    }

    fn coupling_matrix(&self) -> Result<CouplingMatrix> {
        let seed = self.coupling.phase_seed.unwrap_or_else(|| child_seed(self.master_seed, tag::COUPLING, 0));
        build_coupling(&self.coupling, self.antennas, seed)
    }

    fn in_pool<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        if self.workers == 0 {
            return Ok(job());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(job))
    }
}

/// Ground truth of one hardware draw.
struct Truth {
    t_ideal: Vec<Complex64>,
    q: Vec<Complex64>,
    calibration: CalibrationVector,
}

fn truth_of(hw: &BsHardware) -> Result<Truth> {
    let q = q_factors(hw.rx());
    let t_ideal = linearized_chain_gain(&q)?;
    let calibration = CalibrationVector::from_chains(&t_ideal, hw.rx())?;
    Ok(Truth { t_ideal, q, calibration })
}

/// Predistorters built from the true scaled non-linearity, solved exactly.
fn perfect_dpd(hw: &BsHardware, q: &[Complex64], rho_max: f64) -> Result<Vec<DpdInverse>> {
    hw.tx()
        .iter()
        .zip(q)
        .map(|(pa, &qm)| {
            let th = ThetaEstimate::exact(pa, qm);
            build_inverse(th, DpdMode::Exact, 0, default_v_max(&th, rho_max))
        })
        .collect()
}

/// OTA characterization plus predistorter construction.
fn ota_dpd(
    spec: &ExperimentSpec,
    hw: &BsHardware,
    h: &CouplingMatrix,
    n_dpd: usize,
    snr_db: f64,
    index: u64,
) -> Result<Vec<DpdInverse>> {
    let rho_ref = spec.hardware.rho_ref;
    let rho_max = spec.hardware.rho_max();
    let pilots = make_dpd_pilots(
        spec.antennas,
        n_dpd,
        spec.dpd.pilot_amp_lo * rho_ref,
        spec.dpd.pilot_amp_hi * rho_ref,
        child_seed(spec.master_seed, tag::DPD_PILOTS, index),
    )?;
    let n0 = n0_from_link_snr(h, pilots.power(), snr_db);
    let thetas = characterize_array(hw, h, &pilots, n0, child_seed(spec.master_seed, tag::DPD_NOISE, index))?;
    thetas
        .into_iter()
        .map(|th| build_inverse(th, spec.dpd.mode, spec.dpd.lut_size, default_v_max(&th, rho_max)))
        .collect()
}

/// Linear gains seen by constant-amplitude calibration pilots.
fn chain_gains(hw: &BsHardware, dpd: &[DpdInverse], amplitude: f64) -> Vec<Complex64> {
    hw.tx().iter().zip(dpd).map(|(pa, inv)| effective_gain(pa, inv, amplitude)).collect()
}

fn ota_calibration(
    spec: &ExperimentSpec,
    hw: &BsHardware,
    h: &CouplingMatrix,
    t_tilde: &[Complex64],
    n_cal: usize,
    snr_db: f64,
    index: u64,
) -> Result<CalibrationVector> {
    let power = spec.calibration.pilot_power();
    let n0 = n0_from_link_snr(h, power, snr_db);
    let meas = simulate_cal_measurements(
        t_tilde,
        hw.rx(),
        h,
        n_cal,
        power,
        n0,
        child_seed(spec.master_seed, tag::CAL, index),
    )?;
    estimate_calibration(&meas, h)
}

/// One row of the MSE sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub snr_db: f64,
    pub n_dpd: usize,
    pub n_cal: usize,
    pub variant: Variant,
    pub mean_mse: f64,
    pub std_error: f64,
    pub trials: usize,
    pub failures: usize,
    /// Standard error below 10% of the mean.
    pub accepted: bool,
}

fn mse_trial(spec: &ExperimentSpec, h: &CouplingMatrix, snr_db: f64, trial: usize) -> Vec<Result<f64>> {
    let slots = spec.variants.len() * spec.n_dpd_grid.len() * spec.n_cal_grid.len();
    let hw_index = if spec.fixed_hardware { 0 } else { trial as u64 };
    let setup = sample_bs_hardware(&spec.hardware, spec.antennas, child_seed(spec.master_seed, tag::HARDWARE, hw_index))
        .and_then(|hw| truth_of(&hw).map(|truth| (hw, truth)));
    let (hw, truth) = match setup {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return (0..slots).map(|_| Err(Error::Degenerate(msg.clone()))).collect();
        }
    };
    let snr_dpd = spec.dpd.ota_snr_db.unwrap_or(snr_db);
    let snr_cal = spec.calibration.ota_snr_db.unwrap_or(snr_db);
    let index = trial as u64;

    let mut out = Vec::with_capacity(slots);
    for &variant in &spec.variants {
        for &n_dpd in &spec.n_dpd_grid {
            let gains = match variant {
                Variant::Proposed => ota_dpd(spec, &hw, h, n_dpd, snr_dpd, index)
                    .map(|dpd| chain_gains(&hw, &dpd, spec.calibration.pilot_amplitude)),
                _ => Ok(truth.t_ideal.clone()),
            };
            for &n_cal in &spec.n_cal_grid {
                let est = match variant {
                    Variant::PerfectCsi => Ok(truth.calibration.clone()),
                    Variant::NoCal => Ok(CalibrationVector::identity(spec.antennas)),
                    _ => gains
                        .as_ref()
                        .map_err(|e| Error::Degenerate(e.to_string()))
                        .and_then(|g| ota_calibration(spec, &hw, h, g, n_cal, snr_cal, index)),
                };
                out.push(est.map(|c| calibration_mse(&c, &truth.calibration)));
            }
        }
    }
    out
}

/// Calibration MSE against the true normalized calibration vector, for every
/// grid point, variant, `N_dpd` and `N_cal`.
///
/// Rows are ordered by SNR, then variant, `N_dpd` and `N_cal` in the order
/// given by the spec.
pub fn run_mse_sweep(spec: &ExperimentSpec) -> Result<Vec<MseRow>> {
    let h = spec.coupling_matrix()?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.ota_snr_grid_db.len()).flat_map(|s| (0..spec.trials).map(move |t| (s, t))).collect();
    let results: Vec<Vec<Result<f64>>> = spec.in_pool(|| {
        jobs.par_iter().map(|&(s, t)| mse_trial(spec, &h, spec.ota_snr_grid_db[s], t)).collect()
    })?;

    let mut rows = Vec::new();
    for (s, &snr_db) in spec.ota_snr_grid_db.iter().enumerate() {
        let trials = &results[s * spec.trials..(s + 1) * spec.trials];
        let mut slot = 0;
        for &variant in &spec.variants {
            for &n_dpd in &spec.n_dpd_grid {
                for &n_cal in &spec.n_cal_grid {
                    let values: Vec<f64> = trials.iter().filter_map(|r| r[slot].as_ref().ok().copied()).collect();
                    let failures = spec.trials - values.len();
                    let (mean, se) = mean_and_se(&values);
                    rows.push(MseRow {
                        snr_db,
                        n_dpd,
                        n_cal,
                        variant,
                        mean_mse: mean,
                        std_error: se,
                        trials: values.len(),
                        failures,
                        accepted: !values.is_empty() && se <= 0.1 * mean,
                    });
                    slot += 1;
                }
            }
        }
    }
    Ok(rows)
}

/// Sample mean and its standard error, summed in input order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Rate results of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantRates {
    pub variant: Variant,
    pub samples: Vec<RateSample>,
    /// CDF of the designated UE.
    pub cdf: Vec<CdfPoint>,
    pub median: f64,
    pub calibration: CalibrationVector,
    pub calibration_mse: f64,
    pub saturated: u64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResults {
    pub ue_index: usize,
    pub truth: CalibrationVector,
    pub variants: Vec<VariantRates>,
}

impl RateResults {
    pub fn get(&self, variant: Variant) -> Option<&VariantRates> {
        self.variants.iter().find(|v| v.variant == variant)
    }
}

/// Downlink rate CDF of every variant over `spec.realizations` channels.
///
/// Hardware, coupling and the calibration outcome are drawn once, as they
/// vary slowly compared to the propagation channel.
pub fn run_rate_cdf(spec: &ExperimentSpec) -> Result<RateResults> {
    let seed = spec.master_seed;
    let h = spec.coupling_matrix()?;
    let hw = sample_bs_hardware(&spec.hardware, spec.antennas, child_seed(seed, tag::HARDWARE, 0))?;
    let ue = sample_ue_hardware(&spec.ue, spec.users, child_seed(seed, tag::UE_HARDWARE, 0))?;
    let truth = truth_of(&hw)?;
    let rho_max = spec.hardware.rho_max();
    let snr_dpd = spec.dpd.ota_snr_db.unwrap_or(spec.downlink.ota_snr_db);
    let snr_cal = spec.calibration.ota_snr_db.unwrap_or(spec.downlink.ota_snr_db);
    let exact = perfect_dpd(&hw, &truth.q, rho_max)?;

    let mut pipelines = Vec::with_capacity(spec.variants.len());
    for &variant in &spec.variants {
        let (dpd, cal) = match variant {
            Variant::PerfectCsi => (exact.clone(), truth.calibration.clone()),
            Variant::NoCal => (exact.clone(), CalibrationVector::identity(spec.antennas)),
            Variant::IdealDpd => {
                let cal = ota_calibration(spec, &hw, &h, &truth.t_ideal, spec.calibration.n_cal, snr_cal, 0)?;
                (exact.clone(), cal)
            }
            Variant::Proposed => {
                let dpd = ota_dpd(spec, &hw, &h, spec.dpd.n_dpd, snr_dpd, 0)?;
                let gains = chain_gains(&hw, &dpd, spec.calibration.pilot_amplitude);
                let cal = ota_calibration(spec, &hw, &h, &gains, spec.calibration.n_cal, snr_cal, 0)?;
                (dpd, cal)
            }
        };
        pipelines.push((variant, dpd, cal));
    }

    let setup = LinkSetup {
        snr_db: spec.downlink.snr_db,
        n_sym: spec.downlink.n_sym,
        add_noise: true,
        csi_noise_var: spec.downlink.csi_noise_var,
    };
    let per_realization: Vec<Vec<Result<crate::downlink::LinkReport>>> = spec.in_pool(|| {
        (0..spec.realizations)
            .into_par_iter()
            .map(|r| {
                let link_seed = child_seed(seed, tag::SYMBOLS, r as u64);
                match sample_channel(spec.antennas, spec.users, child_seed(seed, tag::CHANNEL, r as u64)) {
                    Ok(chan) => pipelines
                        .iter()
                        .map(|(_, dpd, cal)| evaluate_link(&hw, &ue, &chan, dpd, cal, &setup, link_seed))
                        .collect(),
                    Err(e) => {
                        let msg = e.to_string();
                        pipelines.iter().map(|_| Err(Error::Degenerate(msg.clone()))).collect()
                    }
                }
            })
            .collect()
    })?;

    let ue_index = spec.downlink.ue_index;
    let mut variants = Vec::with_capacity(pipelines.len());
    for (v, (variant, _, cal)) in pipelines.into_iter().enumerate() {
        let mut samples = Vec::new();
        let (mut saturated, mut failures) = (0, 0);
        for (trial, reports) in per_realization.iter().enumerate() {
            match &reports[v] {
                Ok(rep) => {
                    saturated += rep.saturated;
                    samples.extend(rep.sinr.iter().zip(&rep.rate).enumerate().map(|(ue, (&sinr, &rate))| {
                        RateSample { trial, ue, sinr, rate }
                    }));
                }
                Err(_) => failures += 1,
            }
        }
        let cdf = rate_cdf(&samples, ue_index)?;
        let median = cdf_median(&cdf);
        let calibration_mse = calibration_mse(&cal, &truth.calibration);
        variants.push(VariantRates { variant, samples, cdf, median, calibration: cal, calibration_mse, saturated, failures });
    }
    Ok(RateResults { ue_index, truth: truth.calibration, variants })
}
