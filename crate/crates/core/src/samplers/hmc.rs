use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::posterior::PosteriorTarget;

/// Fixed-step leapfrog HMC settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct HmcConfig {
    /// Retained draws.
    pub n_samples: usize,
    pub burn_in: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
    /// Diagonal of the mass matrix `R`; `None` is the identity.
    pub mass_diag: Option<Vec<f64>>,
    /// Run pilot rounds that halve or double `ε` until pilot acceptance
    /// lands in `[0.6, 0.9]`.
    pub tune: bool,
    pub pilot_iters: usize,
    pub max_pilot_rounds: usize,
    /// Set the diagonal mass to the inverse pilot variances.
    pub adapt_mass: bool,
    /// Each iteration uses `ε·(1 + jitter·U(−1, 1))`, which breaks the
    /// periodic trajectories a fixed `(ε, L)` hits on near-Gaussian targets.
    pub jitter: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            burn_in: 1000,
            leapfrog_steps: 20,
            step_size: 0.05,
            mass_diag: None,
            tune: true,
            pilot_iters: 200,
            max_pilot_rounds: 12,
            adapt_mass: false,
            jitter: 0.2,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return invalid("step size must be positive");
        }
        if self.leapfrog_steps == 0 {
            return invalid("leapfrog steps must be at least 1");
        }
        if let Some(m) = &self.mass_diag {
            if m.len() != dim || m.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return invalid("mass diagonal must be positive with one entry per coordinate");
            }
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return invalid("jitter must lie in [0, 1)");
        }
        if self.tune && self.pilot_iters == 0 {
            return invalid("tuning needs at least one pilot iteration");
        }
        Ok(())
    }
}

/// Output of [`hmc_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct HmcChain {
    /// Retained `χ = (θ, latent)` draws.
    pub draws: Vec<Vec<f64>>,
    /// Accepted proposals among the post-pilot iterations.
    pub accepted: usize,
    /// Post-pilot iterations (burn-in plus retained).
    pub iterations: usize,
    /// Iterations rejected for a non-finite Hamiltonian or a target error.
    pub non_finite: usize,
    pub step_size: f64,
    pub mass_diag: Vec<f64>,
}

impl HmcChain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }

    /// Column means of the retained draws.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.draws.first().map_or(0, Vec::len);
        let mut m = vec![0.0; d];
        for x in &self.draws {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        let k = self.draws.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= k);
        m
    }

    /// Column standard deviations (divisor `N − 1`).
    pub fn sd(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; m.len()];
        for x in &self.draws {
            for ((a, b), mu) in v.iter_mut().zip(x).zip(&m) {
                *a += (b - mu) * (b - mu);
            }
        }
        let k = (self.draws.len().max(2) - 1) as f64;
        v.into_iter().map(|a| (a / k).sqrt()).collect()
    }
}

/// State after a leapfrog trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_h: f64,
    pub grad: Vec<f64>,
}

/// `L` leapfrog steps of size `ε` under `H = −log h(χ) + ½ sᵀR⁻¹s`,
/// starting from a position whose `log h` and gradient are known.
pub fn leapfrog<T: PosteriorTarget + ?Sized>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    grad: &[f64],
    step_size: f64,
    steps: usize,
    inv_mass: &[f64],
) -> Result<Trajectory> {
    let mut q = position.to_vec();
    let mut s = momentum.to_vec();
    let mut g = grad.to_vec();
    let mut lh = f64::NAN;
    let half = 0.5 * step_size;
    for _ in 0..steps {
        for (si, gi) in s.iter_mut().zip(&g) {
            *si += half * gi;
        }
        for ((qi, si), mi) in q.iter_mut().zip(&s).zip(inv_mass) {
            *qi += step_size * mi * si;
        }
        let (v, gr) = target.log_h_and_grad(&q)?;
        lh = v;
        g = gr;
        for (si, gi) in s.iter_mut().zip(&g) {
            *si += half * gi;
        }
    }
    Ok(Trajectory { position: q, momentum: s, log_h: lh, grad: g })
}

/// Kinetic energy `½ sᵀR⁻¹s`.
pub fn kinetic(momentum: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * momentum.iter().zip(inv_mass).map(|(s, m)| s * s * m).sum::<f64>()
}

struct Kernel {
    q: Vec<f64>,
    lh: f64,
    grad: Vec<f64>,
    eps: f64,
    jitter: f64,
    mass: Vec<f64>,
    inv_mass: Vec<f64>,
}

impl Kernel {
    /// One HMC transition; returns `(accepted, non_finite)`.
    fn step<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        steps: usize,
        rng: &mut R,
    ) -> (bool, bool) {
        let s0: Vec<f64> = self.mass.iter().map(|m| m.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let h0 = -self.lh + kinetic(&s0, &self.inv_mass);
        let eps =
            if self.jitter > 0.0 { self.eps * (1.0 + self.jitter * rng.random_range(-1.0..1.0)) } else { self.eps };
        let traj = leapfrog(target, &self.q, &s0, &self.grad, eps, steps, &self.inv_mass);
        let u: f64 = rng.random();
        let traj = match traj {
            Ok(t) => t,
            Err(_) => return (false, true),
        };
        let h1 = -traj.log_h + kinetic(&traj.momentum, &self.inv_mass);
        if !h1.is_finite() || traj.grad.iter().any(|g| !g.is_finite()) {
            return (false, true);
        }
        if u.ln() < h0 - h1 {
            self.q = traj.position;
            self.lh = traj.log_h;
            self.grad = traj.grad;
            (true, false)
        } else {
            (false, false)
        }
    }
}

/// Leapfrog HMC over `χ = (θ, latent)` from `init`.
pub fn hmc_run<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &HmcConfig,
    init: &[f64],
    rng: &mut R,
) -> Result<HmcChain> {
    let dim = target.theta_dim() + target.latent_dim();
    if init.len() != dim {
        return invalid("initial state has the wrong length");
    }
    cfg.validate(dim)?;
    let (lh, grad) = target.log_h_and_grad(init)?;
    if !lh.is_finite() {
        return invalid("log density is not finite at the initial state");
    }
    let mass = cfg.mass_diag.clone().unwrap_or_else(|| vec![1.0; dim]);
    let inv_mass = mass.iter().map(|m| 1.0 / m).collect();
    let mut k = Kernel { q: init.to_vec(), lh, grad, eps: cfg.step_size, jitter: cfg.jitter, mass, inv_mass };
    let steps = cfg.leapfrog_steps;

    if cfg.tune {
        for round in 0..cfg.max_pilot_rounds {
            let mut acc = 0usize;
            let mut sum = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            for _ in 0..cfg.pilot_iters {
                acc += usize::from(k.step(target, steps, rng).0);
                for ((a, b), q) in sum.iter_mut().zip(sq.iter_mut()).zip(&k.q) {
                    *a += q;
                    *b += q * q;
                }
            }
            let rate = acc as f64 / cfg.pilot_iters as f64;
            if cfg.adapt_mass && round == 0 && acc > 1 {
                let np = cfg.pilot_iters as f64;
                let var: Vec<f64> = sum.iter().zip(&sq).map(|(a, b)| (b / np - (a / np) * (a / np)).max(0.0)).collect();
                if var.iter().all(|v| *v > 1e-12 && v.is_finite()) {
                    k.inv_mass = var;
                    k.mass = k.inv_mass.iter().map(|v| 1.0 / v).collect();
                    continue;
                }
            }
            if rate < 0.6 {
                k.eps *= 0.5;
            } else if rate > 0.9 {
                k.eps *= 2.0;
            } else {
                break;
            }
        }
    }

    let total = cfg.burn_in + cfg.n_samples;
    let mut draws = Vec::with_capacity(cfg.n_samples);
    let mut accepted = 0;
    let mut non_finite = 0;
    for it in 0..total {
        let (a, bad) = k.step(target, steps, rng);
        accepted += usize::from(a);
        non_finite += usize::from(bad);
        if it >= cfg.burn_in {
            draws.push(k.q.clone());
        }
    }
    Ok(HmcChain { draws, accepted, iterations: total, non_finite, step_size: k.eps, mass_diag: k.mass })
}
