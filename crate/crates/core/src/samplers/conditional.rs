use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::linalg::{CsrMatrix, EnvelopeSymbolic, SparseCholesky};
use crate::spatial::{residual, Group, PartitionedView, SemParams, SemPrecision};

/// Gaussian with covariance `σ² M_bb⁻¹`, stored through the Cholesky factor
/// of `M_bb`.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    pub mean: Vec<f64>,
    factor: Arc<SparseCholesky>,
    sigma2: f64,
}

impl ConditionalGaussian {
    pub fn new(mean: Vec<f64>, factor: Arc<SparseCholesky>, sigma2: f64) -> Result<Self> {
        if mean.len() != factor.dim() || !(sigma2 > 0.0) {
            return invalid("conditional mean/factor mismatch or non-positive variance");
        }
        Ok(Self { mean, factor, sigma2 })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Factor of `M_bb`; the precision is `M_bb / σ²`.
    pub fn factor(&self) -> &SparseCholesky {
        &self.factor
    }

    /// Dense covariance `σ² M_bb⁻¹`, built column by column.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.factor.solve(&e);
            for i in 0..d {
                cov[(i, j)] = self.sigma2 * col[i];
            }
            e[j] = 0.0;
        }
        cov
    }

    /// `mean + σ L⁻ᵀ z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let s = self.sigma2.sqrt();
        self.factor.solve_lt(&z).into_iter().zip(&self.mean).map(|(v, m)| m + s * v).collect()
    }
}

/// Exact draw from a conditional Gaussian.
pub fn sample_conditional<R: Rng + ?Sized>(cg: &ConditionalGaussian, rng: &mut R) -> Vec<f64> {
    cg.sample(rng)
}

/// Distribution of the second group of `view` given the first:
/// mean `X_bβ − M_bb⁻¹ M_ba (y_a − X_aβ)`, covariance `σ² M_bb⁻¹`.
/// `y` is a full-length response; entries of the second group are ignored.
pub fn mar_conditional(
    precision: &SemPrecision,
    x: &DMatrix<f64>,
    phi: &SemParams,
    y: &[f64],
    view: &PartitionedView,
) -> Result<ConditionalGaussian> {
    if y.len() != precision.n() || x.nrows() != precision.n() || view.n() != precision.n() {
        return invalid("conditional dimension mismatch");
    }
    let sys = BlockSystem::new(precision, view.indices(Group::Second).to_vec())?;
    let factor = Arc::new(sys.factor(precision, phi.rho)?);
    let mut r = residual(y, x, &phi.beta);
    let mean = sys.conditional_mean(precision, x, phi, &mut r, &factor);
    ConditionalGaussian::new(mean, factor, phi.sigma2_y)
}

/// Cached structure for conditioning on the complement of a fixed index set.
#[derive(Debug, Clone)]
pub(crate) struct BlockSystem {
    idx: Vec<usize>,
    sub: CsrMatrix,
    src: Vec<usize>,
    symbolic: EnvelopeSymbolic,
}

impl BlockSystem {
    pub(crate) fn new(precision: &SemPrecision, idx: Vec<usize>) -> Result<Self> {
        let n = precision.n();
        let mut local = vec![usize::MAX; n];
        for (k, &i) in idx.iter().enumerate() {
            if i >= n || local[i] != usize::MAX {
                return invalid("block indices must be distinct and in range");
            }
            local[i] = k;
        }
        let pat = precision.pattern();
        let mut indptr = Vec::with_capacity(idx.len() + 1);
        let mut indices = Vec::new();
        let mut src = Vec::new();
        let mut row: Vec<(usize, usize)> = Vec::new();
        indptr.push(0);
        for &i in &idx {
            row.clear();
            let base = pat.indptr()[i];
            for (k, &j) in pat.row(i).0.iter().enumerate() {
                if local[j] != usize::MAX {
                    row.push((local[j], base + k));
                }
            }
            row.sort_unstable();
            for &(j, s) in &row {
                indices.push(j);
                src.push(s);
            }
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        let sub = CsrMatrix::from_parts(idx.len(), idx.len(), indptr, indices, vec![1.0; nnz]);
        let symbolic = EnvelopeSymbolic::new(&sub)?;
        Ok(Self { idx, sub, src, symbolic })
    }

    pub(crate) fn indices(&self) -> &[usize] {
        &self.idx
    }

    /// Cholesky factor of `M_bb(ρ)`.
    pub(crate) fn factor(&self, precision: &SemPrecision, rho: f64) -> Result<SparseCholesky> {
        precision.check_rho(rho)?;
        let mut sub = self.sub.clone();
        for (v, &s) in sub.values_mut().iter_mut().zip(&self.src) {
            *v = precision.value_at(s, rho);
        }
        self.symbolic.factor(&sub)
    }

    /// Conditional mean given the residual `r = y − Xβ` of the current full
    /// response. Block entries of `r` are ignored.
    pub(crate) fn conditional_mean(
        &self,
        precision: &SemPrecision,
        x: &DMatrix<f64>,
        phi: &SemParams,
        r: &mut [f64],
        factor: &SparseCholesky,
    ) -> Vec<f64> {
        let saved: Vec<f64> = self.idx.iter().map(|&i| r[i]).collect();
        for &i in &self.idx {
            r[i] = 0.0;
        }
        let pat = precision.pattern();
        // (M_ba r_a) restricted to the block rows
        let t: Vec<f64> = self
            .idx
            .iter()
            .map(|&i| {
                let base = pat.indptr()[i];
                pat.row(i).0.iter().enumerate().map(|(k, &j)| precision.value_at(base + k, phi.rho) * r[j]).sum()
            })
            .collect();
        for (&i, v) in self.idx.iter().zip(saved) {
            r[i] = v;
        }
        let s = factor.solve(&t);
        self.idx
            .iter()
            .zip(&s)
            .map(|(&i, si)| (0..phi.beta.len()).map(|k| x[(i, k)] * phi.beta[k]).sum::<f64>() - si)
            .collect()
    }
}
