use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Gaussian prior variances, all `1e4` by default.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PriorSpec {
    pub var_beta: f64,
    pub var_gamma: f64,
    pub var_rho_logit: f64,
    pub var_psi: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { var_beta: 1e4, var_gamma: 1e4, var_rho_logit: 1e4, var_psi: 1e4 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.var_beta, self.var_gamma, self.var_rho_logit, self.var_psi];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            invalid("prior variances must be positive and finite")
        }
    }
}

/// Flattening of the unconstrained parameter vector:
/// `β₀..β_r, γ, rho_logit [, ψ₀..ψ_q, ψ_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub n_beta: usize,
    /// `q + 2` under MNAR, 0 under MAR.
    pub n_psi: usize,
}

impl ThetaLayout {
    pub fn mar(n_beta: usize) -> Self {
        Self { n_beta, n_psi: 0 }
    }

    pub fn mnar(n_beta: usize, n_psi_x: usize) -> Self {
        Self { n_beta, n_psi: n_psi_x + 1 }
    }

    pub fn is_mnar(&self) -> bool {
        self.n_psi > 0
    }

    /// `S`
    pub fn dim(&self) -> usize {
        self.n_beta + 2 + self.n_psi
    }

    pub fn gamma(&self) -> usize {
        self.n_beta
    }

    pub fn rho_logit(&self) -> usize {
        self.n_beta + 1
    }

    pub fn psi(&self) -> core::ops::Range<usize> {
        self.n_beta + 2..self.dim()
    }

    /// Names of the unconstrained coordinates.
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.n_beta).map(|k| format!("beta{k}")).collect();
        v.push("gamma".into());
        v.push("rho_logit".into());
        self.push_psi_names(&mut v);
        v
    }

    /// Names after mapping `γ → σ²` and `rho_logit → ρ`.
    pub fn constrained_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.n_beta).map(|k| format!("beta{k}")).collect();
        v.push("sigma2".into());
        v.push("rho".into());
        self.push_psi_names(&mut v);
        v
    }

    fn push_psi_names(&self, v: &mut Vec<String>) {
        if self.n_psi > 0 {
            for k in 0..self.n_psi - 1 {
                v.push(format!("psi{k}"));
            }
            v.push("psi_y".into());
        }
    }

    /// Maps `γ` and `rho_logit` to `σ²` and `ρ`; other entries unchanged.
    pub fn constrain(&self, theta: &[f64]) -> Vec<f64> {
        let mut v = theta.to_vec();
        v[self.gamma()] = theta[self.gamma()].exp();
        v[self.rho_logit()] = crate::spatial::logit_to_rho(theta[self.rho_logit()]);
        v
    }
}
