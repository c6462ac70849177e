//! `fit`: run one method on one dataset and write its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spatialvb_core::missing::simulate_dataset;
use spatialvb_core::posterior::TargetDensity;
use spatialvb_core::samplers::{hmc_run, HmcChain};
use spatialvb_core::vb::{fit_sem, initial_joint, moving_average, slope, tail_slopes, FitResult, Summary};

use crate::config::{usage, Mechanism, Method, RunConfig};
use crate::data::{fmt_f64, write_file, Dataset};
use crate::manifest::Manifest;

pub const SMOOTHING_WINDOW: usize = 500;
pub const SLOPE_WINDOW: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Convergence and tuning record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub skipped: usize,
    pub clipped: usize,
    /// More than 1% of iterations skipped.
    pub flagged: bool,
    /// `elbo`, or `proxy` when the trace is `log h − log q⁰` (HVB).
    pub elbo_kind: Option<String>,
    /// Means of the smoothed trace over its first and last 1000 entries.
    pub elbo_smoothed_first: Option<f64>,
    pub elbo_smoothed_last: Option<f64>,
    /// Least-squares slope of the smoothed trace over its final window.
    pub elbo_smoothed_slope: Option<f64>,
    /// Largest absolute slope of any `μ_θ` coordinate over the final window.
    pub max_mean_slope: Option<f64>,
    pub acceptance_mean: Option<f64>,
    pub hmc_step_size: Option<f64>,
    pub hmc_non_finite: Option<usize>,
    pub warnings: Vec<String>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub label: String,
    pub mechanism: Mechanism,
    pub n: usize,
    pub n_missing: usize,
    /// Fingerprint of the observed data, see [`Dataset::fingerprint`].
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    /// Constrained parameters (`σ²`, `ρ`).
    pub parameters: Vec<Estimate>,
    pub unconstrained: Vec<Estimate>,
    pub diagnostics: Diagnostics,
    pub elapsed_seconds: f64,
}

/// In-memory result of a fit.
pub enum Output {
    Vb(FitResult),
    Hmc(HmcChain),
}

pub struct Fitted {
    pub summary: RunSummary,
    pub output: Output,
    pub latent: Vec<Summary>,
    pub unobserved: Vec<usize>,
    pub names: Vec<String>,
}

/// Loads or simulates the dataset named by the config. Simulated data is
/// returned with `None` as its directory.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Option<PathBuf>)> {
    match &cfg.data {
        Some(d) => Ok((Dataset::read(d).with_context(|| format!("reading dataset {}", d.display()))?, Some(d.clone()))),
        None => {
            let sim = &cfg.simulation;
            let data = simulate_dataset(sim, &mut ChaCha8Rng::seed_from_u64(sim.seed))?;
            Ok((Dataset::from_simulation(sim, &data)?, None))
        }
    }
}

pub fn resolve_mechanism(cfg: &RunConfig, data: &Dataset) -> Result<Mechanism> {
    let m = cfg.mechanism.unwrap_or(if data.x_star.is_some() { Mechanism::Mnar } else { Mechanism::Mar });
    if m == Mechanism::Mnar && data.x_star.is_none() {
        return usage("mechanism mnar needs an Xstar.csv selection design");
    }
    cfg.check_mechanism(m)?;
    Ok(m)
}

fn summaries(names: Vec<String>, s: &[Summary]) -> Vec<Estimate> {
    names.into_iter().zip(s).map(|(name, s)| Estimate { name, mean: s.mean, sd: s.sd }).collect()
}

fn moments(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Vec<Summary> {
    let mut n = 0.0;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for r in rows {
        n += 1.0;
        for k in 0..dim {
            let d = r[k] - mean[k];
            mean[k] += d / n;
            m2[k] += d * (r[k] - mean[k]);
        }
    }
    let denom = (n - 1.0).max(1.0);
    mean.into_iter().zip(m2).map(|(mean, m2)| Summary { mean, sd: (m2 / denom).sqrt() }).collect()
}

fn vb_diagnostics(f: &FitResult) -> Diagnostics {
    let sm = moving_average(&f.elbo_trace, SMOOTHING_WINDOW.min(f.elbo_trace.len().max(1)));
    let head = sm.len().min(1000);
    let avg = |s: &[f64]| (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64);
    let tail = SLOPE_WINDOW.min(sm.len());
    let acc = &f.acceptance_trace;
    Diagnostics {
        iterations: f.iterations,
        skipped: f.skipped,
        clipped: f.clipped,
        flagged: f.flagged,
        elbo_kind: Some(if f.elbo_is_proxy { "proxy" } else { "elbo" }.into()),
        elbo_smoothed_first: avg(&sm[..head]),
        elbo_smoothed_last: avg(&sm[sm.len() - head..]),
        elbo_smoothed_slope: (tail > 1).then(|| slope(&sm[sm.len() - tail..])),
        max_mean_slope: (!f.mean_trajectory.is_empty()).then(|| {
            tail_slopes(&f.mean_trajectory, SLOPE_WINDOW.min(f.mean_trajectory.len()))
                .into_iter()
                .fold(0.0_f64, |a, b| a.max(b.abs()))
        }),
        acceptance_mean: (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64),
        warnings: f.warnings.clone(),
        ..Diagnostics::default()
    }
}

/// Runs the configured method. `data_dir` is recorded in the summary so
/// `compare` can find the ground truth.
pub fn run(cfg: &RunConfig, data: &Dataset, data_dir: Option<PathBuf>) -> Result<Fitted> {
    let mechanism = resolve_mechanism(cfg, data)?;
    let mnar = mechanism == Mechanism::Mnar;
    let target: TargetDensity = data.target(mnar, cfg.row_normalize, cfg.priors)?;
    let layout = target.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // keep the fit stream apart from an in-memory simulation on the same seed
    rng.set_stream(1);
    let t0 = Instant::now();
    let (output, parameters, unconstrained, latent, diagnostics) = match cfg.method.vb() {
        Some(m) => {
            let f = fit_sem(&target, m, &cfg.vb, cfg.mcmc(m, mnar), &mut rng)?;
            let p = summaries(layout.constrained_names(), &f.theta);
            let u = summaries(layout.names(), &f.theta_unconstrained);
            let d = vb_diagnostics(&f);
            let lat = f.latent.clone();
            (Output::Vb(f), p, u, lat, d)
        }
        None => {
            cfg.hmc.validate(layout.dim() + target.pattern().n_u())?;
            let init = initial_joint(&target, &mut rng)?;
            let chain = hmc_run(&target, &cfg.hmc, &init, &mut rng)?;
            let s = layout.dim();
            let p = summaries(
                layout.constrained_names(),
                &moments(chain.draws.iter().map(|d| layout.constrain(&d[..s])), s),
            );
            let u = summaries(layout.names(), &moments(chain.draws.iter().map(|d| d[..s].to_vec()), s));
            let n_u = target.pattern().n_u();
            let lat = moments(chain.draws.iter().map(|d| d[s..].to_vec()), n_u);
            let d = Diagnostics {
                iterations: chain.iterations,
                acceptance_mean: Some(chain.acceptance_rate()),
                hmc_step_size: Some(chain.step_size),
                hmc_non_finite: Some(chain.non_finite),
                ..Diagnostics::default()
            };
            (Output::Hmc(chain), p, u, lat, d)
        }
    };
    let data_dir = data_dir.map(|d| std::fs::canonicalize(&d).unwrap_or(d));
    let summary = RunSummary {
        method: cfg.method,
        label: cfg.method.tag().into(),
        mechanism,
        n: data.n(),
        n_missing: target.pattern().n_u(),
        dataset: data.fingerprint()?,
        data_dir,
        seed: cfg.seed,
        parameters,
        unconstrained,
        diagnostics,
        elapsed_seconds: t0.elapsed().as_secs_f64(),
    };
    Ok(Fitted {
        summary,
        output,
        latent,
        unobserved: target.pattern().unobserved_idx().to_vec(),
        names: layout.names(),
    })
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

/// Writes every artifact of a fit into `dir`; returns the file names.
pub fn write_artifacts(f: &Fitted, dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        write_file(&dir.join(name), &bytes)?;
        files.push(name.to_string());
        Ok(())
    };
    let mut js = serde_json::to_string_pretty(&f.summary)?;
    js.push('\n');
    put("summary.json", js.into_bytes())?;
    put(
        "missing_posterior.csv",
        csv_bytes(
            ["index", "mean", "sd"].map(String::from).to_vec(),
            f.unobserved.iter().zip(&f.latent).map(|(i, s)| vec![i.to_string(), fmt_f64(s.mean), fmt_f64(s.sd)]),
        )?,
    )?;
    match &f.output {
        Output::Vb(r) => {
            let kind = if r.elbo_is_proxy { "proxy" } else { "elbo" };
            put(
                "elbo_trace.csv",
                csv_bytes(
                    ["iteration", "value", "kind"].map(String::from).to_vec(),
                    r.elbo_trace
                        .iter()
                        .enumerate()
                        .map(|(t, v)| vec![(t + 1).to_string(), fmt_f64(*v), kind.to_string()]),
                )?,
            )?;
            let mut header = vec!["iteration".to_string()];
            header.extend(f.names.iter().cloned());
            put(
                "mean_trajectory.csv",
                csv_bytes(
                    header,
                    r.mean_trajectory.iter().enumerate().map(|(t, mu)| {
                        let mut row = vec![(t + 1).to_string()];
                        row.extend(mu.iter().map(|v| fmt_f64(*v)));
                        row
                    }),
                )?,
            )?;
        }
        Output::Hmc(c) => {
            let mut header = f.names.clone();
            header.extend(f.unobserved.iter().map(|i| format!("y{i}")));
            put("chain.csv", csv_bytes(header, c.draws.iter().map(|d| d.iter().map(|v| fmt_f64(*v)).collect()))?)?;
        }
    }
    Ok(files)
}

/// Output directory of replicate `k`.
pub fn replicate_dir(cfg: &RunConfig, k: usize) -> PathBuf {
    if cfg.replicates > 1 {
        cfg.out.join(format!("rep{k}"))
    } else {
        cfg.out.clone()
    }
}

/// Config of replicate `k`: seeds shifted by `k`, output in its own directory.
pub fn replicate_config(cfg: &RunConfig, k: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.seed = cfg.seed + k as u64;
    if c.data.is_none() {
        c.simulation.seed += k as u64;
    }
    c.out = replicate_dir(cfg, k);
    c.replicates = 1;
    c
}

/// One complete replicate: data, fit, artifacts, manifest.
pub fn fit_one(cfg: &RunConfig) -> Result<RunSummary> {
    if let Some(m) = cfg.declared_mechanism() {
        cfg.check_mechanism(m)?;
    }
    let (data, mut dir) = load_dataset(cfg)?;
    if dir.is_none() {
        let d = cfg.out.join("data");
        data.write(&d)?;
        dir = Some(d);
    }
    let fitted = run(cfg, &data, dir)?;
    let mut files = write_artifacts(&fitted, &cfg.out)?;
    files.sort();
    Manifest::new("fit", cfg, cfg.seed, files).write(&cfg.out)?;
    Ok(fitted.summary)
}
