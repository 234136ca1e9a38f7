//! Acceptance suite, built without the test harness so its report is always
//! shown. Every criterion prints one PASS/FAIL line; the process exits
//! nonzero if any criterion fails. Criteria run one after another so that their
//! wall-clock budgets are measured without contention.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use otacal::config::RunConfig;
use otacal::coupling::{build_coupling, combined_noise_variance, CouplingConfig};
use otacal::dpd_inverse::{build_inverse, default_v_max, effective_gain, linearization_nmse_db, linearized_chain_gain, DpdMode};
use otacal::experiment::{run_mse_sweep, run_rate_cdf, ExperimentSpec, MseRow, Variant};
use otacal::hardware::{sample_bs_hardware, HardwareConfig};
use otacal::ota_dpd::{characterize_array, combine_block, make_dpd_pilots, q_factors, simulate_antenna_measurements, ThetaEstimate};
use otacal::output::{write_mse_csv, write_rate_csvs};
use otacal::reciprocity::{
    calibration_mse, estimate_calibration, estimate_calibration_counted, simulate_cal_measurements, CalibrationVector,
};
use otacal::rng::{complex_normal, seeded};

const THETA_REL_TOL: f64 = 1e-9;
const NOISELESS_MSE_TOL: f64 = 1e-18;
const NOISE_VAR_REL_TOL: f64 = 0.03;
const NOISE_DRAWS: usize = 100_000;
const LUT_NMSE_DB: f64 = -60.0;
const LUT_POINTS: usize = 10_000;
const MSE_GAP_DB: f64 = 3.0;
const SLOPE_TOL: f64 = 0.25;
const MEDIAN_REL_TOL: f64 = 0.05;
const SINGLE_USER_REL_TOL: f64 = 0.02;
const OPS_EXPONENT_TOL: f64 = 0.1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn noiseless_exactness() -> Outcome {
    let start = Instant::now();
    let m = 8;
    let hw = sample_bs_hardware(&HardwareConfig::default(), m, 101).unwrap();
    let h = build_coupling(&CouplingConfig::default(), m, 102).unwrap();
    let pilots = make_dpd_pilots(m, 64, 0.25, 1.2, 103).unwrap();
    let thetas = characterize_array(&hw, &h, &pilots, 0.0, 104).unwrap();
    let q = q_factors(hw.rx());
    let mut worst = 0.0f64;
    for ((th, pa), &qm) in thetas.iter().zip(hw.tx()).zip(&q) {
        let want = ThetaEstimate::exact(pa, qm);
        let norm = (want.theta1.norm_sqr() + want.theta2.norm_sqr()).sqrt();
        let err = ((th.theta1 - want.theta1).norm_sqr() + (th.theta2 - want.theta2).norm_sqr()).sqrt();
        worst = worst.max(err / norm);
    }
    let rho_max = HardwareConfig::default().rho_max();
    let gains: Vec<Complex64> = thetas
        .iter()
        .zip(hw.tx())
        .map(|(&th, pa)| {
            let inv = build_inverse(th, DpdMode::Exact, 0, default_v_max(&th, rho_max)).unwrap();
            effective_gain(pa, &inv, 0.5)
        })
        .collect();
    let truth = CalibrationVector::from_chains(&linearized_chain_gain(&q).unwrap(), hw.rx()).unwrap();
    let meas = simulate_cal_measurements(&gains, hw.rx(), &h, 64, 0.25, 0.0, 105).unwrap();
    let mse = calibration_mse(&estimate_calibration(&meas, &h).unwrap(), &truth);
    let elapsed = start.elapsed();
    Outcome {
        passed: worst < THETA_REL_TOL && mse < NOISELESS_MSE_TOL && within(elapsed, 1.0),
        detail: format!("max theta rel err {worst:.2e}, calibration MSE {mse:.2e}, {:.3} s", elapsed.as_secs_f64()),
    }
}

fn noise_variance() -> Outcome {
    let start = Instant::now();
    let m = 16;
    let hw = sample_bs_hardware(&HardwareConfig::default(), m, 201).unwrap();
    let n_pilots = 1000;
    let pilots = make_dpd_pilots(m, n_pilots, 0.25, 1.2, 202).unwrap();
    let n0 = 0.01;
    let mut worst = 0.0f64;
    for (k, slope) in [0.0, -0.5, -1.0].into_iter().enumerate() {
        let cfg = CouplingConfig { slope_db_per_index: slope, ..CouplingConfig::default() };
        let h = build_coupling(&cfg, m, 210 + k as u64).unwrap();
        for i in 0..m {
            let clean = combine_block(&simulate_antenna_measurements(&hw, &h, &pilots, i, 0.0, 0).unwrap(), &h, i);
            let mut sum_sq = 0.0;
            for d in 0..(NOISE_DRAWS / n_pilots) as u64 {
                let block = simulate_antenna_measurements(&hw, &h, &pilots, i, n0, 1000 * k as u64 + d).unwrap();
                let noisy = combine_block(&block, &h, i);
                sum_sq += noisy.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            }
            let empirical = sum_sq / NOISE_DRAWS as f64;
            worst = worst.max((empirical / combined_noise_variance(&h, i, n0) - 1.0).abs());
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: worst < NOISE_VAR_REL_TOL && within(elapsed, 10.0),
        detail: format!("max relative deviation {:.2}% over 3 matrices x 16 antennas, {:.2} s", 100.0 * worst, elapsed.as_secs_f64()),
    }
}

fn lut_residual() -> Outcome {
    let start = Instant::now();
    let cfg = HardwareConfig::default();
    let hw = sample_bs_hardware(&cfg, 8, 301).unwrap();
    let q = q_factors(hw.rx());
    let mut rng = seeded(302);
    let (mut worst256, mut best16_gap) = (f64::NEG_INFINITY, f64::INFINITY);
    for (pa, &qm) in hw.tx().iter().zip(&q) {
        let th = ThetaEstimate::exact(pa, qm);
        let v_max = default_v_max(&th, cfg.rho_max());
        let inputs: Vec<Complex64> = (0..LUT_POINTS)
            .map(|_| {
                let z = complex_normal(&mut rng, 1.0);
                z / z.norm() * (v_max * rand::Rng::random::<f64>(&mut rng))
            })
            .collect();
        let nmse = |l: usize| linearization_nmse_db(pa, qm, &build_inverse(th, DpdMode::Lut, l, v_max).unwrap(), &inputs);
        let (fine, coarse) = (nmse(256), nmse(16));
        worst256 = worst256.max(fine);
        best16_gap = best16_gap.min(coarse - fine);
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: worst256 < LUT_NMSE_DB && best16_gap > 0.0 && within(elapsed, 5.0),
        detail: format!(
            "worst NMSE at L=256 {worst256:.1} dB, L=16 worse by at least {best16_gap:.1} dB, {:.2} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn mse_value(rows: &[MseRow], snr: f64, n_cal: usize, v: Variant) -> f64 {
    rows.iter().find(|r| r.snr_db == snr && r.n_cal == n_cal && r.variant == v).unwrap().mean_mse
}

/// Least-squares slope of `log10(mse)` against `snr_db / 10`.
fn decade_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0 / 10.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn mse_sweep() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.array.antennas = 32;
    cfg.array.users = 4;
    cfg.experiment.trials = 500;
    cfg.experiment.ota_snr_grid_db = vec![-10.0, 0.0, 10.0, 20.0, 30.0];
    cfg.experiment.n_cal_grid = vec![200, 2000];
    cfg.experiment.mse_variants = vec![Variant::Proposed, Variant::IdealDpd];
    let rows = run_mse_sweep(&ExperimentSpec::mse_sweep(&cfg).unwrap()).unwrap();
    let grid = &cfg.experiment.ota_snr_grid_db;
    let variants = [Variant::Proposed, Variant::IdealDpd];

    let mut gap_db = f64::NEG_INFINITY;
    for &snr in grid.iter().filter(|&&s| s >= 10.0) {
        for n_cal in [200, 2000] {
            let ratio = mse_value(&rows, snr, n_cal, Variant::Proposed) / mse_value(&rows, snr, n_cal, Variant::IdealDpd);
            gap_db = gap_db.max(10.0 * ratio.log10());
        }
    }
    let ordered = grid.iter().all(|&snr| {
        variants.iter().all(|&v| mse_value(&rows, snr, 2000, v) <= mse_value(&rows, snr, 200, v))
    });
    let mut slopes = Vec::new();
    for v in variants {
        for n_cal in [200, 2000] {
            let pts: Vec<(f64, f64)> = grid.iter().map(|&s| (s, mse_value(&rows, s, n_cal, v))).collect();
            slopes.push(decade_slope(&pts));
        }
    }
    let slopes_ok = slopes.iter().all(|s| (s + 1.0).abs() <= SLOPE_TOL);
    let accepted = rows.iter().all(|r| r.accepted && r.failures == 0);
    let elapsed = start.elapsed();
    Outcome {
        passed: gap_db <= MSE_GAP_DB && ordered && slopes_ok && accepted && within(elapsed, 300.0),
        detail: format!(
            "(a) max proposed/ideal gap {gap_db:.2} dB at SNR >= 10 dB; (b) N_cal 2000 <= 200 everywhere: {ordered}; \
             (c) slopes {:?} decades per 10 dB; all points se < 10% of mean: {accepted}; {:.1} s",
            slopes.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    }
}

fn rate_cdf() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.array.antennas = 32;
    cfg.array.users = 4;
    cfg.downlink.realizations = 1000;
    cfg.downlink.snr_db = 10.0;
    let res = run_rate_cdf(&ExperimentSpec::rate_cdf(&cfg).unwrap()).unwrap();
    let med = |v: Variant| res.get(v).unwrap().median;
    let (no_cal, proposed, ideal, perfect) =
        (med(Variant::NoCal), med(Variant::Proposed), med(Variant::IdealDpd), med(Variant::PerfectCsi));
    let failures: usize = res.variants.iter().map(|v| v.failures).sum();
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let elapsed = start.elapsed();
    Outcome {
        passed: no_cal < proposed
            && rel(proposed, ideal) <= MEDIAN_REL_TOL
            && rel(ideal, perfect) <= MEDIAN_REL_TOL
            && failures == 0
            && within(elapsed, 300.0),
        detail: format!(
            "medians no-cal {no_cal:.4}, proposed {proposed:.4}, ideal-dpd {ideal:.4}, perfect-csi {perfect:.4} bit/s/Hz; \
             {failures} failed realizations; {:.1} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn single_user() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.array.antennas = 16;
    cfg.array.users = 1;
    cfg.downlink.realizations = 400;
    cfg.downlink.snr_db = 10.0;
    cfg.experiment.rate_variants = vec![Variant::PerfectCsi];
    let res = run_rate_cdf(&ExperimentSpec::rate_cdf(&cfg).unwrap()).unwrap();
    let samples = &res.get(Variant::PerfectCsi).unwrap().samples;
    let mean = samples.iter().map(|s| s.rate).sum::<f64>() / samples.len() as f64;
    let want = 11f64.log2();
    let elapsed = start.elapsed();
    Outcome {
        passed: ((mean - want) / want).abs() <= SINGLE_USER_REL_TOL && within(elapsed, 10.0),
        detail: format!("mean rate {mean:.4} vs log2(11) = {want:.4} over {} realizations, {:.2} s", samples.len(), elapsed.as_secs_f64()),
    }
}

/// Strips the unit-test module and comments, then looks for iteration
/// keywords that a convergence loop would need.
fn has_iteration_loop(source: &str) -> bool {
    let code = source.split("#[cfg(test)]").next().unwrap_or(source);
    code.lines()
        .map(|l| l.split("//").next().unwrap_or(""))
        .flat_map(|l| l.split(|ch: char| !(ch.is_alphanumeric() || ch == '_')))
        .any(|word| word == "loop" || word == "while")
}

fn complexity() -> Outcome {
    let mut points = Vec::new();
    for m in [16usize, 32, 64, 128] {
        let hw = sample_bs_hardware(&HardwareConfig::default(), m, 701).unwrap();
        let h = build_coupling(&CouplingConfig::default(), m, 702).unwrap();
        let t = linearized_chain_gain(&q_factors(hw.rx())).unwrap();
        for n_cal in [100usize, 1000] {
            let meas = simulate_cal_measurements(&t, hw.rx(), &h, n_cal, 0.25, 1e-4, 703).unwrap();
            let (_, ops) = estimate_calibration_counted(&meas, &h).unwrap();
            points.push(((m * n_cal) as f64, ops.total() as f64));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let exponent = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let looped = has_iteration_loop(include_str!("../src/reciprocity.rs"));
    Outcome {
        passed: (exponent - 1.0).abs() <= OPS_EXPONENT_TOL && !looped,
        detail: format!("op-count exponent in M*N_cal {exponent:.4}; iteration loop in calibration source: {looped}"),
    }
}

fn run_all_outputs(cfg: &RunConfig, dir: &Path) {
    let rows = run_mse_sweep(&ExperimentSpec::mse_sweep(cfg).unwrap()).unwrap();
    write_mse_csv(dir, &rows).unwrap();
    let res = run_rate_cdf(&ExperimentSpec::rate_cdf(cfg).unwrap()).unwrap();
    write_rate_csvs(dir, &res).unwrap();
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.seed = 8;
    cfg.array.antennas = 16;
    cfg.array.users = 3;
    cfg.experiment.trials = 40;
    cfg.experiment.ota_snr_grid_db = vec![0.0, 20.0];
    cfg.experiment.n_cal_grid = vec![100];
    cfg.experiment.mse_variants = Variant::ALL.to_vec();
    cfg.downlink.realizations = 30;
    let mut runs = Vec::new();
    for (name, workers) in [("w1", 1), ("w4", 4), ("w4-again", 4)] {
        cfg.experiment.workers = workers;
        let dir = tmp.path().join(name);
        run_all_outputs(&cfg, &dir);
        runs.push(csv_bytes(&dir));
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    let files = runs[0].len();
    Outcome {
        passed: identical && files == 4,
        detail: format!("{files} CSV files byte-identical across 1, 4 and 4 workers: {identical}"),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("noiseless exactness", noiseless_exactness),
        ("combined noise variance", noise_variance),
        ("LUT linearization residual", lut_residual),
        ("MSE sweep orderings", mse_sweep),
        ("rate CDF orderings", rate_cdf),
        ("single-user rate", single_user),
        ("calibration complexity", complexity),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {}", i + 1, outcome.detail);
        if !outcome.passed {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
