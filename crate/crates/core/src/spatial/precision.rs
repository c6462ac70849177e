use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use super::params::SemParams;
use super::weights::SpatialWeights;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, CsrMatrix, SparseCholesky};

/// Distance kept from the ends of the admissible `ρ` interval.
pub const RHO_MARGIN: f64 = 1e-8;

/// The SEM precision `M(ρ) = (I − ρW)ᵀ(I − ρW) = I − ρ(W + Wᵀ) + ρ²WᵀW`
/// stored as three value arrays over one shared sparsity pattern.
#[derive(Debug, Clone)]
pub struct SemPrecision {
    w: CsrMatrix,
    wt: CsrMatrix,
    pattern: CsrMatrix,
    v_eye: Vec<f64>,
    v_sym: Vec<f64>,
    v_sq: Vec<f64>,
    interval: (f64, f64),
}

impl SemPrecision {
    /// Requires row-normalised weights; computes the admissible interval.
    pub fn new(weights: &SpatialWeights) -> Result<Self> {
        let interval = weights.rho_interval()?;
        Self::with_interval(weights, interval)
    }

    pub fn with_interval(weights: &SpatialWeights, interval: (f64, f64)) -> Result<Self> {
        let n = weights.n();
        let w = weights.matrix().clone();
        let wt = w.transpose();
        let sym = w.add_scaled(1.0, &wt, 1.0)?;
        let sq = wt.matmul(&w)?;
        let eye = CsrMatrix::identity(n);
        // union pattern; explicit zeros are kept so the pattern does not depend on ρ
        let mut t = Vec::new();
        for (i, j, _) in eye.iter().chain(sym.iter()).chain(sq.iter()) {
            t.push((i, j, 0.0));
        }
        let pattern = CsrMatrix::from_triplets(n, n, &t)?;
        let spread = |m: &CsrMatrix| -> Vec<f64> {
            let mut v = vec![0.0; pattern.nnz()];
            for i in 0..n {
                let (cols, _) = pattern.row(i);
                let base = pattern.indptr()[i];
                let (mc, mv) = m.row(i);
                for (&j, &x) in mc.iter().zip(mv) {
                    let k = cols.binary_search(&j).expect("pattern covers operand");
                    v[base + k] = x;
                }
            }
            v
        };
        let v_eye = spread(&eye);
        let v_sym = spread(&sym);
        let v_sq = spread(&sq);
        Ok(Self { w, wt, pattern, v_eye, v_sym, v_sq, interval })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &CsrMatrix {
        &self.w
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Errors unless `lower + margin < ρ < upper − margin`.
    pub fn check_rho(&self, rho: f64) -> Result<()> {
        let (lo, hi) = self.interval;
        if rho.is_finite() && rho > lo + RHO_MARGIN && rho < hi - RHO_MARGIN {
            Ok(())
        } else {
            Err(Error::RhoOutOfRange { rho, lower: lo, upper: hi })
        }
    }

    /// Shared pattern of `M(ρ)` for every `ρ`.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// Value of `M(ρ)` at pattern slot `k`.
    #[inline]
    pub fn value_at(&self, k: usize, rho: f64) -> f64 {
        self.v_eye[k] - rho * self.v_sym[k] + rho * rho * self.v_sq[k]
    }

    pub fn matrix(&self, rho: f64) -> Result<CsrMatrix> {
        self.check_rho(rho)?;
        Ok(self.matrix_unchecked(rho))
    }

    pub(crate) fn matrix_unchecked(&self, rho: f64) -> CsrMatrix {
        let vals = (0..self.pattern.nnz()).map(|k| self.value_at(k, rho)).collect();
        CsrMatrix::from_parts(self.n(), self.n(), self.pattern.indptr().to_vec(), self.pattern.indices().to_vec(), vals)
    }

    /// `∂M/∂ρ = −(W + Wᵀ) + 2ρWᵀW`.
    pub fn derivative(&self, rho: f64) -> CsrMatrix {
        let vals = (0..self.pattern.nnz()).map(|k| -self.v_sym[k] + 2.0 * rho * self.v_sq[k]).collect();
        CsrMatrix::from_parts(self.n(), self.n(), self.pattern.indptr().to_vec(), self.pattern.indices().to_vec(), vals)
    }

    /// `A r = r − ρ W r`.
    pub fn apply_a(&self, rho: f64, r: &[f64]) -> Vec<f64> {
        let wr = self.w.mul_vec(r);
        r.iter().zip(&wr).map(|(a, b)| a - rho * b).collect()
    }

    /// `M(ρ) r` through `Aᵀ(A r)`.
    pub fn apply(&self, rho: f64, r: &[f64]) -> Vec<f64> {
        let ar = self.apply_a(rho, r);
        let wtar = self.wt.mul_vec(&ar);
        ar.iter().zip(&wtar).map(|(a, b)| a - rho * b).collect()
    }

    /// Residual quantities `(rᵀ M r, rᵀ (∂M/∂ρ) r, M r)` from two sparse
    /// products with `W`.
    pub fn residual_forms(&self, rho: f64, r: &[f64]) -> (f64, f64, Vec<f64>) {
        let wr = self.w.mul_vec(r);
        let rwr = dot(r, &wr);
        let wr2 = dot(&wr, &wr);
        let ar: Vec<f64> = r.iter().zip(&wr).map(|(a, b)| a - rho * b).collect();
        let quad = dot(&ar, &ar);
        let dquad = -2.0 * rwr + 2.0 * rho * wr2;
        let wtar = self.wt.mul_vec(&ar);
        let mr = ar.iter().zip(&wtar).map(|(a, b)| a - rho * b).collect();
        (quad, dquad, mr)
    }

    /// `log|M(ρ)|` from a sparse Cholesky factor.
    pub fn log_det_cholesky(&self, rho: f64) -> Result<f64> {
        Ok(self.factor(rho)?.log_det())
    }

    pub fn factor(&self, rho: f64) -> Result<SparseCholesky> {
        self.check_rho(rho)?;
        let (lo, hi) = self.interval;
        SparseCholesky::factor(&self.matrix_unchecked(rho)).map_err(|_| Error::RhoOutOfRange {
            rho,
            lower: lo,
            upper: hi,
        })
    }

    /// SEM log-likelihood of a complete response vector.
    pub fn log_likelihood(&self, y: &[f64], params: &SemParams, x: &DMatrix<f64>) -> Result<f64> {
        let n = self.n();
        if y.len() != n || x.nrows() != n || x.ncols() != params.beta.len() {
            return invalid("log-likelihood dimension mismatch");
        }
        if !(params.sigma2_y > 0.0) {
            return invalid("sigma2_y must be positive");
        }
        let ch = self.factor(params.rho)?;
        let r = residual(y, x, &params.beta);
        let mr = self.apply(params.rho, &r);
        let nf = n as f64;
        Ok(-0.5 * nf * (2.0 * core::f64::consts::PI).ln() - 0.5 * nf * params.sigma2_y.ln() + 0.5 * ch.log_det()
            - 0.5 * dot(&r, &mr) / params.sigma2_y)
    }
}

/// `y − Xβ`.
pub fn residual(y: &[f64], x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let mut r = y.to_vec();
    for (k, &b) in beta.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (ri, xi) in r.iter_mut().zip(x.column(k).iter()) {
            *ri -= b * xi;
        }
    }
    r
}

/// `M(ρ)` for a row-normalised `W`, with `ρ` checked against the interval.
pub fn precision_matrix(rho: f64, w: &SpatialWeights) -> Result<CsrMatrix> {
    SemPrecision::new(w)?.matrix(rho)
}

/// Log-likelihood of `y ~ N(Xβ, σ²(AᵀA)⁻¹)` via a sparse Cholesky of `M`.
pub fn sem_log_likelihood(y: &[f64], params: &SemParams, x: &DMatrix<f64>, w: &SpatialWeights) -> Result<f64> {
    SemPrecision::new(w)?.log_likelihood(y, params, x)
}
