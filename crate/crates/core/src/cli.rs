//! Command-line entry point.
//!
//! ```text
//! otacal [--config PATH] [--seed N] [--out DIR] [--trials N] [--variant NAME]... [--workers N] <COMMAND>
//! ```
//!
//! Output directory precedence: `--out`, then `OTACAL_OUT_DIR`, then the
//! config's `output_dir`.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, RunConfig};
use crate::error::{Error, Result};
use crate::experiment::{run_mse_sweep, run_rate_cdf, ExperimentSpec, Variant};
use crate::output::{write_manifest, write_mse_csv, write_rate_csvs, Manifest};
use crate::selftest::run_selftest;

pub const OUT_DIR_ENV: &str = "OTACAL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "otacal", version, about = "Over-the-air DPD and reciprocity calibration simulator")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Trials per SNR point (mse-sweep) or channel realizations (rate-cdf).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Variant to run; repeat for several.
    #[arg(long = "variant", global = true, value_name = "NAME")]
    variants: Vec<String>,
    /// Worker threads, 0 = all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Calibration MSE against OTA SNR.
    MseSweep,
    /// Downlink rate CDF per variant.
    RateCdf,
    /// Built-in consistency checks.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::MseSweep => "mse-sweep",
            Command::RateCdf => "rate-cdf",
            Command::Selftest => "selftest",
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.experiment.workers = workers;
    }
    let variants = cli.variants.iter().map(|v| v.parse()).collect::<Result<Vec<Variant>>>()?;
    match cli.command {
        Command::MseSweep => {
            if let Some(n) = cli.trials {
                cfg.experiment.trials = n;
            }
            if !variants.is_empty() {
                cfg.experiment.mse_variants = variants;
            }
        }
        Command::RateCdf => {
            if let Some(n) = cli.trials {
                cfg.downlink.realizations = n;
            }
            if !variants.is_empty() {
                cfg.experiment.rate_variants = variants;
            }
        }
        Command::Selftest => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir))
}

fn selftest() -> i32 {
    let outcomes = run_selftest();
    let mut failed = 0;
    for o in &outcomes {
        if o.passed {
            println!("PASS {}", o.name);
        } else {
            failed += 1;
            println!("FAIL {}: {}", o.name, o.detail);
        }
    }
    println!("{} checks, {} failed", outcomes.len(), failed);
    i32::from(failed > 0)
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let cfg = load_config(cli)?;
    let dir = output_dir(cli, &cfg);
    let files = match cli.command {
        Command::MseSweep => {
            let rows = run_mse_sweep(&ExperimentSpec::mse_sweep(&cfg)?)?;
            let failures: usize = rows.iter().map(|r| r.failures).sum();
            if failures > 0 {
                eprintln!("warning: {failures} trial(s) failed and were excluded");
            }
            vec![write_mse_csv(&dir, &rows)?]
        }
        Command::RateCdf => {
            let res = run_rate_cdf(&ExperimentSpec::rate_cdf(&cfg)?)?;
            for v in &res.variants {
                println!("{:<12} median rate {:.4} bit/s/Hz, calibration MSE {:.3e}", v.variant, v.median, v.calibration_mse);
            }
            write_rate_csvs(&dir, &res)?
        }
        Command::Selftest => unreachable!(),
    };
    let names = files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    let manifest = Manifest {
        command: cli.command.name(),
        scenario: &cfg.scenario,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: names,
        config: &cfg,
    };
    let path = write_manifest(&dir, &manifest)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on a run failure, 2 on a
/// usage error.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.command == Command::Selftest {
        if cli.config.is_some() || cli.trials.is_some() || !cli.variants.is_empty() {
            eprintln!("error: selftest does not take --config, --trials or --variant");
            return 2;
        }
        return selftest();
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
