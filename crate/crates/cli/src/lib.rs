//! Command-line driver for the `macrocollapse` engine: config parsing,
//! experiment dispatch and reproducible output files.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;

use std::path::PathBuf;

use serde::Serialize;

use artifacts::{Bundle, Meta, VERSION};
use config::{ExperimentConfig, Parameters};
use error::CliError;
use experiments::{dispersion, drift, noise, oracle, regime, sde, Tables};

/// Runs the experiment and renders every output in memory. Nothing touches
/// the filesystem.
pub fn render(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| render_in_pool(cfg))
}

/// [`render`] followed by an atomic write into `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    render(cfg)?.commit(&cfg.output_dir)
}

fn render_in_pool(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let meta = Meta { version: VERSION, experiment: cfg.experiment.name(), seed: cfg.seed, config_sha256: cfg.hash() };
    let seed = cfg.seed;
    let born = cfg.experiment == config::Experiment::Born;
    match &cfg.parameters {
        Parameters::Sde(p) => bundle(&meta, sde::execute(p, seed, born)?),
        Parameters::Oracle(p) => bundle(&meta, oracle::execute(p, seed)?),
        Parameters::Drift(p) => bundle(&meta, drift::execute(p, seed)?),
        Parameters::Dispersion(p) => bundle(&meta, dispersion::execute(p)?),
        Parameters::NoiseValidate(p) => bundle(&meta, noise::execute(p, seed)?),
        Parameters::Regime(p) => bundle(&meta, regime::execute(p)?),
    }
}

fn bundle<R: Serialize>(meta: &Meta, (report, tables): (R, Tables)) -> Result<Bundle, CliError> {
    let mut out = Bundle::default();
    for (name, table) in &tables {
        out.csv(name, meta, table)?;
    }
    out.json("report.json", meta, &report)?;
    Ok(out)
}
