use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::conditional::{BlockSystem, ConditionalGaussian};
use crate::error::{invalid, Result};
use crate::linalg::SparseCholesky;
use crate::missing::{
    bernoulli_logit_log_prob, make_blocks, mnar_default_block_size, BlockPartition, MAR_GIBBS_BLOCK_SIZE,
};
use crate::posterior::TargetDensity;
use crate::spatial::{residual, SemParams};

/// Which blocks each inner MCMC iteration visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockScheme {
    /// Every block, in partition order.
    All,
    /// `k_prime` blocks drawn uniformly without replacement.
    Random { k_prime: usize },
}

/// Integer accept/propose counts per block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AcceptanceTracker {
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
}

impl AcceptanceTracker {
    fn ensure(&mut self, k: usize) {
        if self.accepted.len() < k {
            self.accepted.resize(k, 0);
            self.proposed.resize(k, 0);
        }
    }

    fn record(&mut self, block: usize, accepted: bool) {
        self.ensure(block + 1);
        self.proposed[block] += 1;
        self.accepted[block] += u64::from(accepted);
    }

    pub fn rate(&self, block: usize) -> Option<f64> {
        let p = *self.proposed.get(block)?;
        (p > 0).then(|| self.accepted[block] as f64 / p as f64)
    }

    /// Pooled accepted/proposed over all blocks.
    pub fn overall(&self) -> Option<f64> {
        let p: u64 = self.proposed.iter().sum();
        (p > 0).then(|| self.accepted.iter().sum::<u64>() as f64 / p as f64)
    }
}

/// Selection-model pieces that enter Metropolis ratios: the covariate
/// offset `x*_i ψ_x` for every unit and `ψ_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTerms {
    pub offset: Vec<f64>,
    pub psi_y: f64,
}

impl SelectionTerms {
    /// `log P(m_i = 1 | y_i)` for a missing unit.
    #[inline]
    fn log_p_missing(&self, i: usize, yi: f64) -> f64 {
        bernoulli_logit_log_prob(true, self.offset[i] + self.psi_y * yi)
    }
}

/// Conditional samplers for the missing responses of one target.
///
/// Factors of `M_uu` and of each block are cached for the most recent `ρ`.
#[derive(Debug, Clone)]
pub struct MissingDataSampler<'a> {
    target: &'a TargetDensity,
    full: BlockSystem,
    blocks: Vec<BlockSystem>,
    full_cache: Option<(u64, Arc<SparseCholesky>)>,
    block_cache: Option<(u64, Vec<Arc<SparseCholesky>>)>,
    tracker: AcceptanceTracker,
}

impl<'a> MissingDataSampler<'a> {
    pub fn new(target: &'a TargetDensity, partition: Option<&BlockPartition>) -> Result<Self> {
        let prec = target.precision();
        let full = BlockSystem::new(prec, target.pattern().unobserved_idx().to_vec())?;
        let blocks = match partition {
            Some(p) => {
                let mut all: Vec<usize> = p.blocks().concat();
                all.sort_unstable();
                if all != target.pattern().unobserved_idx() {
                    return invalid("partition must cover exactly the unobserved units");
                }
                p.blocks().iter().map(|b| BlockSystem::new(prec, b.clone())).collect::<Result<_>>()?
            }
            None => Vec::new(),
        };
        Ok(Self { target, full, blocks, full_cache: None, block_cache: None, tracker: AcceptanceTracker::default() })
    }

    pub fn target(&self) -> &'a TargetDensity {
        self.target
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn tracker(&self) -> &AcceptanceTracker {
        &self.tracker
    }

    pub fn reset_tracker(&mut self) {
        self.tracker = AcceptanceTracker::default();
    }

    fn full_factor(&mut self, rho: f64) -> Result<Arc<SparseCholesky>> {
        match &self.full_cache {
            Some((key, f)) if *key == rho.to_bits() => Ok(f.clone()),
            _ => {
                let f = Arc::new(self.full.factor(self.target.precision(), rho)?);
                self.full_cache = Some((rho.to_bits(), f.clone()));
                Ok(f)
            }
        }
    }

    fn block_factor(&mut self, rho: f64, j: usize) -> Result<Arc<SparseCholesky>> {
        let stale = !matches!(&self.block_cache, Some((key, _)) if *key == rho.to_bits());
        if stale {
            let prec = self.target.precision();
            let fs = self.blocks.iter().map(|b| b.factor(prec, rho).map(Arc::new)).collect::<Result<Vec<_>>>()?;
            self.block_cache = Some((rho.to_bits(), fs));
        }
        Ok(self.block_cache.as_ref().unwrap().1[j].clone())
    }

    fn full_response(&self, y_u: &[f64]) -> Vec<f64> {
        self.target.pattern().assemble(self.target.y_o(), y_u)
    }

    /// `p(y_u | φ, y_o)`.
    pub fn mar_conditional(&mut self, phi: &SemParams) -> Result<ConditionalGaussian> {
        let t = self.target;
        let factor = self.full_factor(phi.rho)?;
        let y = self.full_response(&vec![0.0; t.pattern().n_u()]);
        let mut r = residual(&y, t.x(), &phi.beta);
        let mean = self.full.conditional_mean(t.precision(), t.x(), phi, &mut r, &factor);
        ConditionalGaussian::new(mean, factor, phi.sigma2_y)
    }

    /// `p(y_{u_j} | φ, y_o, y_u^{(−j)})` for the current full response, given
    /// through its residual `r = y − Xβ`.
    fn block_conditional(&mut self, phi: &SemParams, j: usize, r: &mut [f64]) -> Result<ConditionalGaussian> {
        let t = self.target;
        let factor = self.block_factor(phi.rho, j)?;
        let mean = self.blocks[j].conditional_mean(t.precision(), t.x(), phi, r, &factor);
        ConditionalGaussian::new(mean, factor, phi.sigma2_y)
    }

    fn check_init(&self, y_u: &[f64]) -> Result<()> {
        if y_u.len() != self.target.pattern().n_u() {
            return invalid("y_u has the wrong length");
        }
        Ok(())
    }

    fn set_block(&self, phi: &SemParams, j: usize, values: &[f64], y: &mut [f64], r: &mut [f64]) {
        let x = self.target.x();
        for (&i, &v) in self.blocks[j].indices().iter().zip(values) {
            y[i] = v;
            r[i] = v - (0..phi.beta.len()).map(|k| x[(i, k)] * phi.beta[k]).sum::<f64>();
        }
    }

    fn extract_yu(&self, y: &[f64]) -> Vec<f64> {
        self.target.pattern().unobserved_idx().iter().map(|&i| y[i]).collect()
    }

    /// `n1` blocked Gibbs sweeps from `y_u_init`, freshest values first.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &mut self,
        phi: &SemParams,
        n1: usize,
        y_u_init: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_init(y_u_init)?;
        if self.blocks.is_empty() {
            return invalid("gibbs sweep needs a block partition");
        }
        let mut y = self.full_response(y_u_init);
        let mut r = residual(&y, self.target.x(), &phi.beta);
        for _ in 0..n1 {
            for j in 0..self.blocks.len() {
                let cg = self.block_conditional(phi, j, &mut r)?;
                let draw = cg.sample(rng);
                self.set_block(phi, j, &draw, &mut y, &mut r);
            }
        }
        Ok(self.extract_yu(&y))
    }

    /// Independence Metropolis with the MAR conditional as proposal.
    /// Returns the last state and the fraction of accepted proposals.
    pub fn mcmc_nob<R: Rng + ?Sized>(
        &mut self,
        phi: &SemParams,
        sel: &SelectionTerms,
        n1: usize,
        y_u_init: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64)> {
        self.check_init(y_u_init)?;
        if n1 == 0 {
            return invalid("n1 must be at least 1");
        }
        let cg = self.mar_conditional(phi)?;
        let idx = self.target.pattern().unobserved_idx();
        let loglik = |v: &[f64]| -> f64 { idx.iter().zip(v).map(|(&i, &yi)| sel.log_p_missing(i, yi)).sum() };
        let mut cur = y_u_init.to_vec();
        let mut cur_ll = loglik(&cur);
        let mut acc = 0usize;
        for _ in 0..n1 {
            let prop = cg.sample(rng);
            let prop_ll = loglik(&prop);
            let u: f64 = rng.random();
            let ok = u.ln() < prop_ll - cur_ll;
            self.tracker.record(0, ok);
            if ok {
                cur = prop;
                cur_ll = prop_ll;
                acc += 1;
            }
        }
        Ok((cur, acc as f64 / n1 as f64))
    }

    /// Block Metropolis-within-Gibbs with block-conditional proposals.
    /// Returns the last state and per-block acceptance fractions for this
    /// call (`NaN` for blocks never visited).
    pub fn mcmc_block<R: Rng + ?Sized>(
        &mut self,
        phi: &SemParams,
        sel: &SelectionTerms,
        scheme: BlockScheme,
        n1: usize,
        y_u_init: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_init(y_u_init)?;
        let k = self.blocks.len();
        if k == 0 {
            return invalid("block sampler needs a block partition");
        }
        if n1 == 0 {
            return invalid("n1 must be at least 1");
        }
        if let BlockScheme::Random { k_prime } = scheme {
            if k_prime == 0 || k_prime > k {
                return invalid("k_prime must lie in 1..=k");
            }
        }
        let mut y = self.full_response(y_u_init);
        let mut r = residual(&y, self.target.x(), &phi.beta);
        let mut acc = vec![0u64; k];
        let mut prop_n = vec![0u64; k];
        let mut order: Vec<usize> = (0..k).collect();
        for _ in 0..n1 {
            let visit: &[usize] = match scheme {
                BlockScheme::All => &order,
                BlockScheme::Random { k_prime } => {
                    let picked = rand::seq::index::sample(rng, k, k_prime);
                    order.clear();
                    order.extend(picked.iter());
                    &order
                }
            };
            let visit = visit.to_vec();
            for j in visit {
                let cg = self.block_conditional(phi, j, &mut r)?;
                let prop = cg.sample(rng);
                let idx = self.blocks[j].indices();
                let mut log_a = 0.0;
                for (&i, &v) in idx.iter().zip(&prop) {
                    log_a += sel.log_p_missing(i, v) - sel.log_p_missing(i, y[i]);
                }
                let u: f64 = rng.random();
                let ok = u.ln() < log_a;
                self.tracker.record(j, ok);
                prop_n[j] += 1;
                if ok {
                    acc[j] += 1;
                    self.set_block(phi, j, &prop, &mut y, &mut r);
                }
            }
            if matches!(scheme, BlockScheme::Random { .. }) {
                order = (0..k).collect();
            }
        }
        let rates =
            acc.iter().zip(&prop_n).map(|(&a, &p)| if p == 0 { f64::NAN } else { a as f64 / p as f64 }).collect();
        Ok((self.extract_yu(&y), rates))
    }
}

/// Step-5 sampler used inside hybrid VB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SamplerKind {
    /// Exact draw from the MAR conditional.
    Direct,
    /// Blocked Gibbs sweeps (MAR).
    Gibbs,
    /// Full-vector independence Metropolis under MNAR; under MAR every
    /// proposal is accepted, so this is a direct draw.
    NoB,
    /// Metropolis over every block per inner iteration (MNAR).
    AllB,
    /// Metropolis over `k_prime` random blocks per inner iteration (MNAR).
    RandomB { k_prime: usize },
}

impl SamplerKind {
    pub fn requires_mnar(self) -> bool {
        matches!(self, SamplerKind::AllB | SamplerKind::RandomB { .. })
    }

    pub fn requires_mar(self) -> bool {
        matches!(self, SamplerKind::Direct | SamplerKind::Gibbs)
    }

    fn uses_blocks(self) -> bool {
        matches!(self, SamplerKind::Gibbs | SamplerKind::AllB | SamplerKind::RandomB { .. })
    }
}

/// Tuning of the step-5 sampler.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McmcConfig {
    pub kind: SamplerKind,
    /// Inner iterations (sweeps for Gibbs).
    pub n1: usize,
    /// Block size `k*`; `None` picks the default for the kind.
    pub block_size: Option<usize>,
    /// Start each call from the previous state instead of a fresh MAR draw.
    pub warm_start: bool,
}

impl McmcConfig {
    pub fn new(kind: SamplerKind) -> Self {
        let n1 = match kind {
            SamplerKind::Direct => 1,
            SamplerKind::Gibbs => 5,
            _ => 10,
        };
        Self { kind, n1, block_size: None, warm_start: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return invalid("n1 must be at least 1");
        }
        if let SamplerKind::RandomB { k_prime } = self.kind {
            if k_prime == 0 {
                return invalid("k_prime must be at least 1");
            }
        }
        if self.block_size == Some(0) {
            return invalid("block size must be positive");
        }
        Ok(())
    }
}

/// Draws the latent block given `θ`.
pub trait LatentSampler {
    fn sample_latent<R: Rng + ?Sized>(&mut self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>>;

    /// Pooled acceptance since construction, if the sampler has an accept step.
    fn acceptance_rate(&self) -> Option<f64>;
}

/// The configured sampler bound to one target.
#[derive(Debug, Clone)]
pub struct SemSampler<'a> {
    inner: MissingDataSampler<'a>,
    cfg: McmcConfig,
    partition: Option<BlockPartition>,
    state: Option<Vec<f64>>,
    last_rate: Option<f64>,
}

impl<'a> SemSampler<'a> {
    /// Validates `cfg` against the target and builds the block partition
    /// (shuffled with `rng`) when the kind needs one.
    pub fn new<R: Rng + ?Sized>(target: &'a TargetDensity, cfg: McmcConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind.requires_mnar() && !target.is_mnar() {
            return invalid("block Metropolis samplers need an MNAR target");
        }
        if cfg.kind.requires_mar() && target.is_mnar() {
            return invalid("direct and Gibbs samplers need a MAR target");
        }
        let n_u = target.pattern().n_u();
        let partition = if cfg.kind.uses_blocks() && n_u > 0 {
            let size = cfg.block_size.unwrap_or(match cfg.kind {
                SamplerKind::Gibbs => MAR_GIBBS_BLOCK_SIZE,
                _ => mnar_default_block_size(n_u),
            });
            Some(make_blocks(target.pattern(), size.min(n_u), rng)?)
        } else {
            None
        };
        let inner = MissingDataSampler::new(target, partition.as_ref())?;
        Ok(Self { inner, cfg, partition, state: None, last_rate: None })
    }

    pub fn config(&self) -> &McmcConfig {
        &self.cfg
    }

    pub fn partition(&self) -> Option<&BlockPartition> {
        self.partition.as_ref()
    }

    pub fn tracker(&self) -> &AcceptanceTracker {
        self.inner.tracker()
    }

    /// Acceptance fraction of the most recent call.
    pub fn last_rate(&self) -> Option<f64> {
        self.last_rate
    }

    fn selection_terms(&self, theta: &[f64]) -> Option<SelectionTerms> {
        let t = self.inner.target();
        let offset = t.selection_offset(theta)?;
        let psi_y = theta[t.layout().psi().end - 1];
        Some(SelectionTerms { offset, psi_y })
    }
}

impl LatentSampler for SemSampler<'_> {
    fn sample_latent<R: Rng + ?Sized>(&mut self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let t = self.inner.target();
        if theta.len() != t.layout().dim() {
            return invalid("theta has the wrong length");
        }
        if t.pattern().n_u() == 0 {
            return Ok(Vec::new());
        }
        let phi = t.sem_params(theta);
        let init = match (&self.state, self.cfg.warm_start, self.cfg.kind) {
            (Some(s), true, k) if k != SamplerKind::Direct => s.clone(),
            _ => self.inner.mar_conditional(&phi)?.sample(rng),
        };
        let n1 = self.cfg.n1;
        let out = match self.cfg.kind {
            SamplerKind::Direct => init,
            SamplerKind::NoB if !t.is_mnar() => init,
            SamplerKind::Gibbs => self.inner.gibbs_sweep(&phi, n1, &init, rng)?,
            SamplerKind::NoB => {
                let sel = self.selection_terms(theta).expect("MNAR target");
                let (y, rate) = self.inner.mcmc_nob(&phi, &sel, n1, &init, rng)?;
                self.last_rate = Some(rate);
                y
            }
            SamplerKind::AllB | SamplerKind::RandomB { .. } => {
                let sel = self.selection_terms(theta).expect("MNAR target");
                let k = self.inner.n_blocks();
                let scheme = match self.cfg.kind {
                    SamplerKind::RandomB { k_prime } => BlockScheme::Random { k_prime: k_prime.min(k) },
                    _ => BlockScheme::All,
                };
                let before = self.inner.tracker().clone();
                let (y, _) = self.inner.mcmc_block(&phi, &sel, scheme, n1, &init, rng)?;
                let after = self.inner.tracker();
                let acc: u64 = after.accepted.iter().sum::<u64>() - before.accepted.iter().sum::<u64>();
                let prop: u64 = after.proposed.iter().sum::<u64>() - before.proposed.iter().sum::<u64>();
                self.last_rate = (prop > 0).then(|| acc as f64 / prop as f64);
                y
            }
        };
        self.state = Some(out.clone());
        Ok(out)
    }

    fn acceptance_rate(&self) -> Option<f64> {
        self.inner.tracker().overall()
    }
}
