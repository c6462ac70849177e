use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::pattern::MissingPattern;
use crate::error::{invalid, Result};

/// Logistic selection model `logit P(m_i = 1) = x*_i ψ_x + y_i ψ_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionModel {
    pub psi_x: Vec<f64>,
    pub psi_y: f64,
    pub x_star: DMatrix<f64>,
}

impl SelectionModel {
    pub fn new(psi_x: Vec<f64>, psi_y: f64, x_star: DMatrix<f64>) -> Result<Self> {
        if x_star.ncols() != psi_x.len() {
            return invalid("psi_x length must match the columns of x_star");
        }
        if x_star.ncols() == 0 || x_star.column(0).iter().any(|&v| v != 1.0) {
            return invalid("first column of x_star must be all ones");
        }
        Ok(Self { psi_x, psi_y, x_star })
    }

    /// Number of ψ entries, `q + 2`.
    pub fn n_psi(&self) -> usize {
        self.psi_x.len() + 1
    }

    /// `x*_i ψ_x`, the part of the linear predictor not involving `y`.
    pub fn covariate_predictor(&self) -> Vec<f64> {
        (0..self.x_star.nrows())
            .map(|i| self.psi_x.iter().enumerate().map(|(k, p)| self.x_star[(i, k)] * p).sum())
            .collect()
    }

    fn check(&self, y: &[f64], m: &MissingPattern) -> Result<()> {
        if y.len() != self.x_star.nrows() || m.n() != y.len() {
            return invalid("selection model dimension mismatch");
        }
        Ok(())
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log P(m_i | t_i)` for one unit.
#[inline]
pub fn bernoulli_logit_log_prob(missing: bool, t: f64) -> f64 {
    if missing {
        t - softplus(t)
    } else {
        -softplus(t)
    }
}

/// `Σ_i [m_i t_i − log(1 + e^{t_i})]`, `t_i = x*_i ψ_x + y_i ψ_y`.
pub fn selection_log_prob(m: &MissingPattern, y: &[f64], sel: &SelectionModel) -> Result<f64> {
    sel.check(y, m)?;
    let eta = sel.covariate_predictor();
    Ok((0..y.len()).map(|i| bernoulli_logit_log_prob(m.is_missing(i), eta[i] + y[i] * sel.psi_y)).sum())
}

/// `Σ_i (m_i − p_i) z_i` with `z_i = (x*_i, y_i)`; length `q + 2`.
pub fn selection_grad_psi(m: &MissingPattern, y: &[f64], sel: &SelectionModel) -> Result<Vec<f64>> {
    sel.check(y, m)?;
    let eta = sel.covariate_predictor();
    let q1 = sel.psi_x.len();
    let mut g = alloc::vec![0.0; q1 + 1];
    for i in 0..y.len() {
        let resid = f64::from(u8::from(m.is_missing(i))) - logistic(eta[i] + y[i] * sel.psi_y);
        for k in 0..q1 {
            g[k] += resid * sel.x_star[(i, k)];
        }
        g[q1] += resid * y[i];
    }
    Ok(g)
}

/// Derivative of the selection log-probability in each missing response:
/// `(m_i − p_i) ψ_y` at unobserved positions, in `unobserved_idx` order.
pub fn selection_grad_yu(m: &MissingPattern, y: &[f64], sel: &SelectionModel) -> Result<Vec<f64>> {
    sel.check(y, m)?;
    let eta = sel.covariate_predictor();
    Ok(m.unobserved_idx()
        .iter()
        .map(|&i| (f64::from(u8::from(m.is_missing(i))) - logistic(eta[i] + y[i] * sel.psi_y)) * sel.psi_y)
        .collect())
}

/// Draws `m_i ~ Bernoulli(p_i)` independently.
pub fn generate_mnar<R: Rng + ?Sized>(y: &[f64], sel: &SelectionModel, rng: &mut R) -> Result<MissingPattern> {
    if y.len() != sel.x_star.nrows() {
        return invalid("selection model dimension mismatch");
    }
    let eta = sel.covariate_predictor();
    let m = y.iter().zip(&eta).map(|(&yi, &e)| rng.random::<f64>() < logistic(e + yi * sel.psi_y)).collect();
    Ok(MissingPattern::from_indicator(m))
}
