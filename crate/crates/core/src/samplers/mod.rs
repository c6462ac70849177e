//! Samplers for the missing responses and the HMC baseline.

mod conditional;
mod hmc;
mod mcmc;

pub use conditional::{mar_conditional, sample_conditional, ConditionalGaussian};
pub use hmc::{hmc_run, kinetic, leapfrog, HmcChain, HmcConfig, Trajectory};
pub use mcmc::{
    AcceptanceTracker, BlockScheme, LatentSampler, McmcConfig, MissingDataSampler, SamplerKind, SelectionTerms,
    SemSampler,
};
