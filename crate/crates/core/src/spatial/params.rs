use alloc::vec::Vec;

use crate::error::{invalid, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Model parameters `φ = (β, σ², ρ)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SemParams {
    pub beta: Vec<f64>,
    pub sigma2_y: f64,
    pub rho: f64,
}

/// `(β, γ, rho_logit)` with `γ = log σ²` and
/// `rho_logit = log(1 + ρ) − log(1 − ρ)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnconstrainedSemParams {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub rho_logit: f64,
}

pub fn rho_to_logit(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return invalid("rho must lie strictly inside (-1, 1) to be transformed");
    }
    Ok(rho.ln_1p() - (-rho).ln_1p())
}

pub fn logit_to_rho(lambda: f64) -> f64 {
    (0.5 * lambda).tanh()
}

/// `dρ/dλ = 2e^λ / (1 + e^λ)² = (1 − ρ²)/2`.
pub fn drho_dlogit(lambda: f64) -> f64 {
    let r = logit_to_rho(lambda);
    0.5 * (1.0 - r * r)
}

pub fn to_unconstrained(p: &SemParams) -> Result<UnconstrainedSemParams> {
    if !(p.sigma2_y > 0.0) || !p.sigma2_y.is_finite() {
        return invalid("sigma2_y must be positive and finite");
    }
    Ok(UnconstrainedSemParams { beta: p.beta.clone(), gamma: p.sigma2_y.ln(), rho_logit: rho_to_logit(p.rho)? })
}

pub fn from_unconstrained(u: &UnconstrainedSemParams) -> SemParams {
    SemParams { beta: u.beta.clone(), sigma2_y: u.gamma.exp(), rho: logit_to_rho(u.rho_logit) }
}
