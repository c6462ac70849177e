use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::adadelta::{AdadeltaState, DEFAULT_ALPHA, DEFAULT_UPSILON};
use super::estimators::{hvb_gradient_estimate, jvb_gradient_at, GradientEstimate};
use super::family::{draw_variational, mask, VParams};
use crate::error::{invalid, Result};
use crate::posterior::{PosteriorTarget, TargetDensity};
use crate::samplers::{LatentSampler, McmcConfig, SamplerKind, SemSampler};
use crate::spatial::{rho_to_logit, SemParams};

/// Optimiser and summary settings shared by both VB engines.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VbConfig {
    pub iterations: usize,
    /// Factor count `p`.
    pub p: usize,
    /// Draws averaged per gradient estimate.
    pub draws_per_iter: usize,
    /// Per-coordinate gradient clip.
    pub clip: f64,
    /// Fraction of final iterations used for latent summaries under HVB.
    pub summary_window: f64,
    /// Draws from `q` used for constrained `θ` summaries.
    pub summary_draws: usize,
    pub b_init: f64,
    pub d_init: f64,
    pub upsilon: f64,
    pub alpha: f64,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            p: 4,
            draws_per_iter: 1,
            clip: 1e4,
            summary_window: 0.2,
            summary_draws: 10_000,
            b_init: 0.01,
            d_init: 0.1,
            upsilon: DEFAULT_UPSILON,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.draws_per_iter == 0 {
            return invalid("iterations and draws per iteration must be at least 1");
        }
        if !(self.clip > 0.0) {
            return invalid("clip must be positive");
        }
        if !(self.summary_window > 0.0 && self.summary_window <= 1.0) {
            return invalid("summary window must lie in (0, 1]");
        }
        if self.d_init == 0.0 || !self.d_init.is_finite() || !self.b_init.is_finite() {
            return invalid("initial scales must be finite with d non-zero");
        }
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) || !(self.alpha > 0.0) {
            return invalid("ADADELTA needs 0 < upsilon < 1 and alpha > 0");
        }
        Ok(())
    }
}

/// Mean and standard deviation of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

/// Output of a VB run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: String,
    pub vparams: VParams,
    /// One noisy estimate per iteration; `NaN` on skipped iterations.
    pub elbo_trace: Vec<f64>,
    /// The trace is `log h − log q⁰(θ)` rather than an ELBO estimate.
    pub elbo_is_proxy: bool,
    /// `μ_θ` after every iteration.
    pub mean_trajectory: Vec<Vec<f64>>,
    /// Constrained `θ` summaries, from draws of `q`.
    pub theta: Vec<Summary>,
    /// Unconstrained `θ` marginals of `q`.
    pub theta_unconstrained: Vec<Summary>,
    pub latent: Vec<Summary>,
    pub iterations: usize,
    pub skipped: usize,
    pub clipped: usize,
    /// More than 1% of iterations skipped.
    pub flagged: bool,
    /// Per-iteration sampler acceptance under HVB with a Metropolis step.
    pub acceptance_trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub config: VbConfig,
}

struct Optimiser {
    mu: AdadeltaState,
    b: AdadeltaState,
    d: AdadeltaState,
    clip: f64,
    clipped: usize,
}

impl Optimiser {
    fn new(vp: &VParams, cfg: &VbConfig) -> Self {
        let (u, a) = (cfg.upsilon, cfg.alpha);
        Self {
            mu: AdadeltaState::with_params(vp.dim(), u, a),
            b: AdadeltaState::with_params(vp.dim() * vp.p(), u, a),
            d: AdadeltaState::with_params(vp.dim(), u, a),
            clip: cfg.clip,
            clipped: 0,
        }
    }

    fn clip(&mut self, v: &mut [f64]) {
        for x in v {
            if x.abs() > self.clip {
                *x = self.clip.copysign(*x);
                self.clipped += 1;
            }
        }
    }

    fn update(&mut self, vp: &mut VParams, est: &GradientEstimate) {
        let mut gm = est.grad_mu.clone();
        let mut gb: Vec<f64> = est.grad_b.as_slice().to_vec();
        let mut gd = est.grad_d.clone();
        self.clip(&mut gm);
        self.clip(&mut gb);
        self.clip(&mut gd);
        for (m, s) in vp.mu.iter_mut().zip(self.mu.step(&gm)) {
            *m += s;
        }
        let db = self.b.step(&gb);
        let mut step = DMatrix::from_column_slice(vp.dim(), vp.p(), &db);
        mask(&mut step);
        vp.b += step;
        for (d, s) in vp.d.iter_mut().zip(self.d.step(&gd)) {
            *d += s;
        }
    }
}

fn average(ests: Vec<GradientEstimate>) -> GradientEstimate {
    let k = ests.len() as f64;
    let mut it = ests.into_iter();
    let mut acc = it.next().expect("at least one estimate");
    for e in it {
        acc.grad_mu.iter_mut().zip(&e.grad_mu).for_each(|(a, b)| *a += b);
        acc.grad_b += &e.grad_b;
        acc.grad_d.iter_mut().zip(&e.grad_d).for_each(|(a, b)| *a += b);
        acc.elbo += e.elbo;
    }
    acc.grad_mu.iter_mut().for_each(|a| *a /= k);
    acc.grad_b /= k;
    acc.grad_d.iter_mut().for_each(|a| *a /= k);
    acc.elbo /= k;
    acc
}

fn theta_summaries<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q_theta: &VParams,
    draws: usize,
    rng: &mut R,
) -> (Vec<Summary>, Vec<Summary>) {
    let s = q_theta.dim();
    let sd = q_theta.marginal_sd();
    let unc = (0..s).map(|k| Summary { mean: q_theta.mu[k], sd: sd[k] }).collect();
    let mut sum = vec![0.0; s];
    let mut sq = vec![0.0; s];
    for _ in 0..draws {
        let (x, _) = draw_variational(q_theta, rng);
        for (k, v) in target.constrain_theta(&x).into_iter().enumerate() {
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let n = draws.max(1) as f64;
    let con = (0..s)
        .map(|k| {
            let m = sum[k] / n;
            let var = if draws > 1 { (sq[k] - n * m * m).max(0.0) / (n - 1.0) } else { 0.0 };
            Summary { mean: m, sd: var.sqrt() }
        })
        .collect();
    (con, unc)
}

fn finish_flags(skipped: usize, iterations: usize, warnings: &mut Vec<String>) -> bool {
    let flagged = skipped * 100 > iterations;
    if flagged {
        warnings.push(format!("{skipped} of {iterations} iterations skipped for non-finite gradients"));
    }
    flagged
}

/// Joint VB over `χ = (θ, latent)` from initial mean `init`.
pub fn jvb_fit<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &VbConfig,
    rng: &mut R,
) -> Result<FitResult> {
    jvb_fit_observed(target, init, cfg, rng, |_, _| {})
}

/// [`jvb_fit`] calling `observe(t, λ)` after every iteration.
pub fn jvb_fit_observed<T, R, F>(
    target: &T,
    init: &[f64],
    cfg: &VbConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<FitResult>
where
    T: PosteriorTarget + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, &VParams),
{
    cfg.validate()?;
    let s = target.theta_dim();
    let dim = s + target.latent_dim();
    if init.len() != dim {
        return invalid("initial mean must cover theta and the latent block");
    }
    let mut vp = VParams::new(init.to_vec(), cfg.p.min(dim), cfg.b_init, cfg.d_init)?;
    let mut opt = Optimiser::new(&vp, cfg);
    let mut elbo_trace = Vec::with_capacity(cfg.iterations);
    let mut mean_trajectory = Vec::with_capacity(cfg.iterations);
    let mut skipped = 0;
    for t in 0..cfg.iterations {
        let mut ests = Vec::with_capacity(cfg.draws_per_iter);
        let mut ok = true;
        for _ in 0..cfg.draws_per_iter {
            let (_, draw) = draw_variational(&vp, rng);
            match jvb_gradient_at(&vp, target, &draw) {
                Ok(e) if e.is_finite() => ests.push(e),
                _ => ok = false,
            }
        }
        if ok {
            let est = average(ests);
            let before = vp.clone();
            opt.update(&mut vp, &est);
            if vp.is_finite() && vp.d.iter().all(|d| *d != 0.0) {
                elbo_trace.push(est.elbo);
            } else {
                vp = before;
                skipped += 1;
                elbo_trace.push(f64::NAN);
            }
        } else {
            skipped += 1;
            elbo_trace.push(f64::NAN);
        }
        mean_trajectory.push(vp.mu[..s].to_vec());
        observe(t, &vp);
    }
    let mut warnings = Vec::new();
    let flagged = finish_flags(skipped, cfg.iterations, &mut warnings);
    let (theta, theta_unconstrained) = theta_summaries(target, &vp.leading(s), cfg.summary_draws, rng);
    let sd = vp.marginal_sd();
    let latent = (s..dim).map(|k| Summary { mean: vp.mu[k], sd: sd[k] }).collect();
    Ok(FitResult {
        method: "JVB".into(),
        vparams: vp,
        elbo_trace,
        elbo_is_proxy: false,
        mean_trajectory,
        theta,
        theta_unconstrained,
        latent,
        iterations: cfg.iterations,
        skipped,
        clipped: opt.clipped,
        flagged,
        acceptance_trace: Vec::new(),
        warnings,
        config: cfg.clone(),
    })
}

/// Pooled acceptance below which an MNAR run is warned about.
pub const LOW_ACCEPTANCE: f64 = 0.05;

/// Acceptance fraction of the sampler's most recent call, if it has one.
pub trait LastAcceptance {
    fn last_acceptance(&self) -> Option<f64>;
}

impl LastAcceptance for SemSampler<'_> {
    fn last_acceptance(&self) -> Option<f64> {
        self.last_rate()
    }
}

/// Hybrid VB over `θ` with the latent block drawn by `sampler`.
pub fn hvb_fit<T, S, R>(target: &T, sampler: &mut S, init: &[f64], cfg: &VbConfig, rng: &mut R) -> Result<FitResult>
where
    T: PosteriorTarget + ?Sized,
    S: LatentSampler + LastAcceptance,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let s = target.theta_dim();
    let n_u = target.latent_dim();
    if init.len() != s {
        return invalid("initial mean must have one entry per theta coordinate");
    }
    let mut vp = VParams::new(init.to_vec(), cfg.p.min(s), cfg.b_init, cfg.d_init)?;
    let mut opt = Optimiser::new(&vp, cfg);
    let mut elbo_trace = Vec::with_capacity(cfg.iterations);
    let mut mean_trajectory = Vec::with_capacity(cfg.iterations);
    let mut acceptance_trace = Vec::new();
    let window_start =
        cfg.iterations - ((cfg.iterations as f64 * cfg.summary_window).ceil() as usize).clamp(1, cfg.iterations);
    let mut y_sum = vec![0.0; n_u];
    let mut y_sq = vec![0.0; n_u];
    let mut y_count = 0usize;
    let mut skipped = 0;
    for t in 0..cfg.iterations {
        let mut ests = Vec::with_capacity(cfg.draws_per_iter);
        let mut ok = true;
        let mut rates = Vec::new();
        for _ in 0..cfg.draws_per_iter {
            let (theta, draw) = draw_variational(&vp, rng);
            let latent = match sampler.sample_latent(&theta, rng) {
                Ok(y) => y,
                Err(_) => {
                    ok = false;
                    continue;
                }
            };
            rates.extend(sampler.last_acceptance());
            if t >= window_start {
                for k in 0..n_u {
                    y_sum[k] += latent[k];
                    y_sq[k] += latent[k] * latent[k];
                }
                y_count += 1;
            }
            match hvb_gradient_estimate(&vp, target, &latent, &draw) {
                Ok(e) if e.is_finite() => ests.push(e),
                _ => ok = false,
            }
        }
        if !rates.is_empty() {
            acceptance_trace.push(rates.iter().sum::<f64>() / rates.len() as f64);
        }
        if ok {
            let est = average(ests);
            let before = vp.clone();
            opt.update(&mut vp, &est);
            if vp.is_finite() && vp.d.iter().all(|d| *d != 0.0) {
                elbo_trace.push(est.elbo);
            } else {
                vp = before;
                skipped += 1;
                elbo_trace.push(f64::NAN);
            }
        } else {
            skipped += 1;
            elbo_trace.push(f64::NAN);
        }
        mean_trajectory.push(vp.mu.clone());
    }
    let mut warnings = Vec::new();
    let flagged = finish_flags(skipped, cfg.iterations, &mut warnings);
    if !acceptance_trace.is_empty() {
        let tail = &acceptance_trace[acceptance_trace.len() - acceptance_trace.len().div_ceil(5)..];
        let rate = tail.iter().sum::<f64>() / tail.len() as f64;
        if rate < LOW_ACCEPTANCE {
            warnings.push(format!(
                "sampler acceptance {rate:.3} over the final iterations is below {LOW_ACCEPTANCE}; a block size giving 20-30% acceptance is recommended"
            ));
        }
    }
    let (theta, theta_unconstrained) = theta_summaries(target, &vp, cfg.summary_draws, rng);
    let c = y_count.max(1) as f64;
    let latent = (0..n_u)
        .map(|k| {
            let m = y_sum[k] / c;
            let var = if y_count > 1 { (y_sq[k] - c * m * m).max(0.0) / (c - 1.0) } else { 0.0 };
            Summary { mean: m, sd: var.sqrt() }
        })
        .collect();
    Ok(FitResult {
        method: "HVB".into(),
        vparams: vp,
        elbo_trace,
        elbo_is_proxy: true,
        mean_trajectory,
        theta,
        theta_unconstrained,
        latent,
        iterations: cfg.iterations,
        skipped,
        clipped: opt.clipped,
        flagged,
        acceptance_trace,
        warnings,
        config: cfg.clone(),
    })
}

/// The five VB variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum VbMethod {
    Jvb,
    #[cfg_attr(feature = "serde", serde(rename = "hvb-nob"))]
    HvbNoB,
    #[cfg_attr(feature = "serde", serde(rename = "hvb-g"))]
    HvbG,
    #[cfg_attr(feature = "serde", serde(rename = "hvb-allb"))]
    HvbAllB,
    #[cfg_attr(feature = "serde", serde(rename = "hvb-3b"))]
    Hvb3B,
}

impl VbMethod {
    pub fn tag(self) -> &'static str {
        match self {
            VbMethod::Jvb => "JVB",
            VbMethod::HvbNoB => "HVB-NoB",
            VbMethod::HvbG => "HVB-G",
            VbMethod::HvbAllB => "HVB-AllB",
            VbMethod::Hvb3B => "HVB-3B",
        }
    }

    /// Step-5 sampler for this method; `None` for JVB.
    pub fn sampler_kind(self, mnar: bool) -> Option<SamplerKind> {
        match self {
            VbMethod::Jvb => None,
            VbMethod::HvbNoB if mnar => Some(SamplerKind::NoB),
            VbMethod::HvbNoB => Some(SamplerKind::Direct),
            VbMethod::HvbG => Some(SamplerKind::Gibbs),
            VbMethod::HvbAllB => Some(SamplerKind::AllB),
            VbMethod::Hvb3B => Some(SamplerKind::RandomB { k_prime: 3 }),
        }
    }

    /// Rejects combinations the samplers cannot serve.
    pub fn check_mechanism(self, mnar: bool) -> Result<()> {
        match self {
            VbMethod::HvbG if mnar => invalid("hvb-g requires a MAR mechanism"),
            VbMethod::HvbAllB | VbMethod::Hvb3B if !mnar => invalid("hvb-allb and hvb-3b require an MNAR mechanism"),
            _ => Ok(()),
        }
    }
}

/// Starting `θ`: OLS `β` and `σ²` from the observed rows, `ρ = 0.01`, every
/// `ψ` entry 0.01.
pub fn initial_theta(target: &TargetDensity) -> Result<Vec<f64>> {
    let pat = target.pattern();
    let x = target.x();
    let k = x.ncols();
    let obs = pat.observed_idx();
    if obs.len() <= k {
        return invalid("too few observed rows for least squares");
    }
    let xo = DMatrix::from_fn(obs.len(), k, |a, j| x[(obs[a], j)]);
    let yo = DVector::from_column_slice(target.y_o());
    let xtx = xo.tr_mul(&xo);
    let beta = xtx
        .cholesky()
        .ok_or_else(|| crate::Error::Numerical("observed design is rank deficient".into()))?
        .solve(&xo.tr_mul(&yo));
    let res = &yo - &xo * &beta;
    let sigma2 = (res.norm_squared() / (obs.len() - k) as f64).max(1e-8);
    let l = target.layout();
    let mut theta = vec![0.01; l.dim()];
    theta[..k].copy_from_slice(beta.as_slice());
    theta[l.gamma()] = sigma2.ln();
    theta[l.rho_logit()] = rho_to_logit(0.01)?;
    Ok(theta)
}

/// JVB starting mean: [`initial_theta`] followed by one draw from the MAR
/// conditional at those parameters.
pub fn initial_joint<R: Rng + ?Sized>(target: &TargetDensity, rng: &mut R) -> Result<Vec<f64>> {
    let mut theta = initial_theta(target)?;
    if target.pattern().n_u() > 0 {
        let phi: SemParams = target.sem_params(&theta);
        let mut s = crate::samplers::MissingDataSampler::new(target, None)?;
        theta.extend(s.mar_conditional(&phi)?.sample(rng));
    }
    Ok(theta)
}

/// Runs `method` on `target` from the default initial values. `mcmc`
/// overrides the sampler tuning implied by the method.
pub fn fit_sem<R: Rng + ?Sized>(
    target: &TargetDensity,
    method: VbMethod,
    cfg: &VbConfig,
    mcmc: Option<McmcConfig>,
    rng: &mut R,
) -> Result<FitResult> {
    method.check_mechanism(target.is_mnar())?;
    let mut res = match method.sampler_kind(target.is_mnar()) {
        None => {
            let init = initial_joint(target, rng)?;
            jvb_fit(target, &init, cfg, rng)?
        }
        Some(kind) => {
            let mc = match mcmc {
                Some(m) => McmcConfig { kind, ..m },
                None => McmcConfig::new(kind),
            };
            let init = initial_theta(target)?;
            let mut sampler = SemSampler::new(target, mc, rng)?;
            hvb_fit(target, &mut sampler, &init, cfg, rng)?
        }
    };
    res.method = method.tag().into();
    Ok(res)
}
