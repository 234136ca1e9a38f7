//! CSV and JSON result files.
//!
//! CSV content depends only on the configuration and seed. Floats are written
//! with Rust's shortest round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::experiment::{MseRow, RateResults};

pub const MSE_FILE: &str = "mse_sweep.csv";
pub const RATE_FILE: &str = "rate_samples.csv";
pub const CDF_FILE: &str = "rate_cdf.csv";
pub const CAL_FILE: &str = "calibration.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize)]
struct RateRecord {
    variant: &'static str,
    trial: usize,
    ue: usize,
    sinr: f64,
    sinr_db: f64,
    rate: f64,
}

#[derive(Serialize)]
struct CdfRecord {
    variant: &'static str,
    ue: usize,
    rate: f64,
    prob: f64,
}

#[derive(Serialize)]
struct CalRecord {
    variant: &'static str,
    antenna: usize,
    re: f64,
    im: f64,
    true_re: f64,
    true_im: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mse_csv(dir: &Path, rows: &[MseRow]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(MSE_FILE);
    write_rows(&path, rows)?;
    Ok(path)
}

/// Writes per-sample rates, the designated UE's CDF and the calibration
/// vectors. Returns the paths in that order.
pub fn write_rate_csvs(dir: &Path, res: &RateResults) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let rates = dir.join(RATE_FILE);
    write_rows(
        &rates,
        res.variants.iter().flat_map(|v| {
            v.samples.iter().map(move |s| RateRecord {
                variant: v.variant.name(),
                trial: s.trial,
                ue: s.ue,
                sinr: s.sinr,
                sinr_db: 10.0 * s.sinr.log10(),
                rate: s.rate,
            })
        }),
    )?;

    let cdf = dir.join(CDF_FILE);
    write_rows(
        &cdf,
        res.variants.iter().flat_map(|v| {
            v.cdf.iter().map(move |p| CdfRecord { variant: v.variant.name(), ue: res.ue_index, rate: p.rate, prob: p.prob })
        }),
    )?;

    let cal = dir.join(CAL_FILE);
    let truth = res.truth.as_slice();
    write_rows(
        &cal,
        res.variants.iter().flat_map(|v| {
            v.calibration.as_slice().iter().zip(truth).enumerate().map(move |(antenna, (c, t))| CalRecord {
                variant: v.variant.name(),
                antenna,
                re: c.re,
                im: c.im,
                true_re: t.re,
                true_im: t.im,
            })
        }),
    )?;
    Ok(vec![rates, cdf, cal])
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub scenario: &'a str,
    pub seed: u64,
    pub version: &'a str,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub config: &'a RunConfig,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest<'_>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(path)
}
