//! JSON run configuration shared by all subcommands.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spatialvb_core::missing::{SimConfig, SimMechanism};
use spatialvb_core::posterior::PriorSpec;
use spatialvb_core::samplers::{HmcConfig, McmcConfig, SamplerKind};
use spatialvb_core::vb::{VbConfig, VbMethod};

/// Configuration or argument problem detected before any computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "jvb")]
    Jvb,
    #[serde(rename = "hvb-nob")]
    HvbNoB,
    #[serde(rename = "hvb-g")]
    HvbG,
    #[serde(rename = "hvb-allb")]
    HvbAllB,
    #[serde(rename = "hvb-3b")]
    Hvb3B,
    #[serde(rename = "hmc")]
    Hmc,
}

impl Method {
    pub fn vb(self) -> Option<VbMethod> {
        match self {
            Method::Jvb => Some(VbMethod::Jvb),
            Method::HvbNoB => Some(VbMethod::HvbNoB),
            Method::HvbG => Some(VbMethod::HvbG),
            Method::HvbAllB => Some(VbMethod::HvbAllB),
            Method::Hvb3B => Some(VbMethod::Hvb3B),
            Method::Hmc => None,
        }
    }

    pub fn tag(self) -> &'static str {
        self.vb().map_or("HMC", VbMethod::tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Mar,
    Mnar,
}

/// Step-5 sampler tuning. `None` fields take the per-method defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    /// Inner Metropolis iterations or Gibbs sweeps (`N₁`).
    pub n1: Option<usize>,
    /// Block size `k*`.
    pub block_size: Option<usize>,
    /// Blocks updated per inner iteration by hvb-3b (`k′`).
    pub k_prime: Option<usize>,
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Settings for `simulate`, and for `fit` when `data` is absent.
    pub simulation: SimConfig,
    /// Dataset directory read by `fit`. When absent, `fit` simulates from
    /// `simulation` and writes the dataset under `<out>/data`.
    pub data: Option<PathBuf>,
    /// Missingness mechanism assumed by `fit`. When absent it is MNAR
    /// exactly when the data directory has an `Xstar.csv`.
    pub mechanism: Option<Mechanism>,
    pub method: Method,
    pub vb: VbConfig,
    pub sampler: SamplerSettings,
    pub hmc: HmcConfig,
    pub priors: PriorSpec,
    /// Row-normalise the weights read from `W.csv`.
    pub row_normalize: bool,
    pub seed: u64,
    pub out: PathBuf,
    /// Independent `fit` replicates; replicate `k` uses seed `seed + k` and
    /// writes to `<out>/rep<k>` when there is more than one.
    pub replicates: usize,
    /// Run directories read by `compare`.
    pub runs: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            simulation: SimConfig::default(),
            data: None,
            mechanism: None,
            method: Method::HvbNoB,
            vb: VbConfig::default(),
            sampler: SamplerSettings::default(),
            hmc: HmcConfig::default(),
            priors: PriorSpec::default(),
            row_normalize: true,
            seed: 1,
            out: PathBuf::from("out"),
            replicates: 1,
            runs: Vec::new(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                match serde_json::from_str(&text) {
                    Ok(c) => c,
                    Err(e) => return usage(format!("{}: {e}", p.display())),
                }
            }
            None => RunConfig::default(),
        };
        cfg.apply(ov);
        Ok(cfg)
    }

    /// `--seed` sets the run seed and every simulation seed.
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.seed = s;
            self.simulation.seed = s;
        }
        if let Some(o) = &ov.out {
            self.out = o.clone();
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the resolved configuration JSON, ignoring `out`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serialises")))
    }

    /// Checks that hold before any data is read.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: spatialvb_core::Result<()>| r.or_else(|e| usage(e.to_string()));
        wrap(self.simulation.validate())?;
        wrap(self.vb.validate())?;
        wrap(self.priors.validate())?;
        if self.replicates == 0 {
            return usage("replicates must be at least 1");
        }
        if self.sampler.k_prime.is_some() && self.method != Method::Hvb3B {
            return usage("k_prime applies only to hvb-3b");
        }
        if let Some(m) = self.declared_mechanism() {
            self.check_mechanism(m)?;
        }
        Ok(())
    }

    /// Mechanism known without reading files.
    pub fn declared_mechanism(&self) -> Option<Mechanism> {
        self.mechanism.or(match (&self.data, &self.simulation.mechanism) {
            (Some(_), _) => None,
            (None, SimMechanism::Mar { .. }) => Some(Mechanism::Mar),
            (None, SimMechanism::Mnar { .. }) => Some(Mechanism::Mnar),
        })
    }

    pub fn check_mechanism(&self, m: Mechanism) -> Result<()> {
        if let Some(v) = self.method.vb() {
            if let Err(e) = v.check_mechanism(m == Mechanism::Mnar) {
                return usage(e.to_string());
            }
        }
        Ok(())
    }

    /// Sampler settings for a VB method under the given mechanism.
    pub fn mcmc(&self, method: VbMethod, mnar: bool) -> Option<McmcConfig> {
        let mut kind = method.sampler_kind(mnar)?;
        if let (SamplerKind::RandomB { .. }, Some(k)) = (kind, self.sampler.k_prime) {
            kind = SamplerKind::RandomB { k_prime: k };
        }
        let mut mc = McmcConfig::new(kind);
        if let Some(n1) = self.sampler.n1 {
            mc.n1 = n1;
        }
        mc.block_size = self.sampler.block_size;
        mc.warm_start = self.sampler.warm_start;
        Some(mc)
    }
}
