use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::Result;
use crate::linalg::dot;
use crate::spatial::SemPrecision;

/// Above this size the exact trace is replaced by a Hutchinson estimate.
pub const EXACT_TRACE_MAX_N: usize = 2500;
/// Default number of Rademacher probes for the Hutchinson estimate.
pub const DEFAULT_PROBES: usize = 20;

/// How `log|M(ρ)|` and `tr(M⁻¹ ∂M/∂ρ)` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LogDetMethod {
    /// Closed form from the eigenvalues `ω` of `W`:
    /// `log|M| = 2Σ log(1 − ρω)`.
    Spectral,
    /// Sparse Cholesky log-determinant, trace from `n` solves.
    Exact,
    /// Sparse Cholesky log-determinant, Hutchinson trace.
    Hutchinson { probes: usize },
}

#[derive(Debug, Clone)]
pub(crate) enum LogDetEngine {
    Spectral(Vec<f64>),
    Exact,
    Hutchinson(Vec<Vec<f64>>),
}

impl LogDetEngine {
    pub(crate) fn method(&self) -> LogDetMethod {
        match self {
            LogDetEngine::Spectral(_) => LogDetMethod::Spectral,
            LogDetEngine::Exact => LogDetMethod::Exact,
            LogDetEngine::Hutchinson(p) => LogDetMethod::Hutchinson { probes: p.len() },
        }
    }

    pub(crate) fn hutchinson<R: Rng + ?Sized>(n: usize, probes: usize, rng: &mut R) -> Self {
        let z = (0..probes.max(1))
            .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect();
        LogDetEngine::Hutchinson(z)
    }

    /// `log|M(ρ)|` and, when asked, `d log|M| / dρ = tr(M⁻¹ ∂M/∂ρ)`.
    pub(crate) fn eval(&self, prec: &SemPrecision, rho: f64, want_trace: bool) -> Result<(f64, f64)> {
        match self {
            LogDetEngine::Spectral(omega) => {
                let mut ld = 0.0;
                let mut tr = 0.0;
                for &w in omega {
                    let a = 1.0 - rho * w;
                    ld += a.ln();
                    tr -= w / a;
                }
                Ok((2.0 * ld, 2.0 * tr))
            }
            LogDetEngine::Exact => {
                let ch = prec.factor(rho)?;
                if !want_trace {
                    return Ok((ch.log_det(), 0.0));
                }
                let dm = prec.derivative(rho);
                let n = prec.n();
                let mut col = vec![0.0; n];
                let mut tr = 0.0;
                // column j of ∂M/∂ρ equals row j by symmetry
                for j in 0..n {
                    let (cols, vals) = dm.row(j);
                    for (&i, &v) in cols.iter().zip(vals) {
                        col[i] = v;
                    }
                    tr += ch.solve(&col)[j];
                    for &i in cols {
                        col[i] = 0.0;
                    }
                }
                Ok((ch.log_det(), tr))
            }
            LogDetEngine::Hutchinson(probes) => {
                let ch = prec.factor(rho)?;
                if !want_trace {
                    return Ok((ch.log_det(), 0.0));
                }
                let dm = prec.derivative(rho);
                let tr = probes.iter().map(|z| dot(z, &ch.solve(&dm.mul_vec(z)))).sum::<f64>() / probes.len() as f64;
                Ok((ch.log_det(), tr))
            }
        }
    }
}
