//! File formats, run configuration and subcommands for `spatialvb-core`.

pub mod compare;
pub mod config;
pub mod data;
pub mod fit;
pub mod manifest;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spatialvb_core::missing::simulate_dataset;

pub use config::{Mechanism, Method, Overrides, RunConfig, UsageError};
pub use data::Dataset;
pub use fit::RunSummary;

/// Simulates `cfg.simulation` and writes the dataset files into `cfg.out`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Dataset> {
    cfg.simulation.validate().or_else(|e| config::usage(e.to_string()))?;
    let sim = &cfg.simulation;
    let data = simulate_dataset(sim, &mut ChaCha8Rng::seed_from_u64(sim.seed))?;
    let ds = Dataset::from_simulation(sim, &data)?;
    ds.write(&cfg.out)?;
    let mut files: Vec<String> = std::fs::read_dir(&cfg.out)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|f| f != "manifest.json")
        .collect();
    files.sort();
    manifest::Manifest::new("simulate", cfg, sim.seed, files).write(&cfg.out)?;
    Ok(ds)
}

/// Runs every replicate, `jobs` at a time.
pub fn cmd_fit(cfg: &RunConfig, jobs: usize) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let cfgs: Vec<RunConfig> = (0..cfg.replicates).map(|k| fit::replicate_config(cfg, k)).collect();
    if jobs <= 1 || cfgs.len() == 1 {
        return cfgs.iter().map(fit::fit_one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| cfgs.par_iter().map(fit::fit_one).collect())
}

/// Compares `cfg.runs` and writes `comparison.csv` into `cfg.out`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<compare::Comparison> {
    let c = compare::compare(&cfg.runs)?;
    data::write_file(&cfg.out.join("comparison.csv"), &c.to_csv()?)?;
    Ok(c)
}
