use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spatialvb::{cmd_compare, cmd_fit, cmd_simulate, Overrides, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "spatialvb", version, about = "Variational Bayes for spatial error models with missing responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset on a rook grid.
    Simulate(Common),
    /// Fit a model to a dataset.
    Fit(Common),
    /// Tabulate completed fits of the same dataset.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Run directories; replaces `runs` from the config.
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to anything not given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replicate fits run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &Overrides { seed: self.seed, out: self.out.clone() })
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, runs) = match &cli.command {
        Command::Simulate(c) | Command::Fit(c) => (c, None),
        Command::Compare { common, runs } => (common, Some(runs)),
    };
    let mut cfg = common.resolve()?;
    if let Some(r) = runs.filter(|r| !r.is_empty()) {
        cfg.runs = r.clone();
    }
    if common.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    match cli.command {
        Command::Simulate(_) => {
            let ds = cmd_simulate(&cfg)?;
            let n_u = ds.y.iter().filter(|v| v.is_none()).count();
            println!("wrote {} units ({n_u} missing) to {}", ds.n(), cfg.out.display());
        }
        Command::Fit(_) => {
            for s in cmd_fit(&cfg, common.jobs.max(1))? {
                println!("{} on n={} ({} missing), {:.1}s", s.label, s.n, s.n_missing, s.elapsed_seconds);
                for e in &s.parameters {
                    println!("  {:<10} {:>12.4} ({:.4})", e.name, e.mean, e.sd);
                }
                for w in &s.diagnostics.warnings {
                    eprintln!("warning: {w}");
                }
            }
        }
        Command::Compare { .. } => print!("{}", cmd_compare(&cfg)?.render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
