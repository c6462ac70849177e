//! Sparse and small dense linear algebra used by the model code.

mod cholesky;
mod csr;

pub use cholesky::{reverse_cuthill_mckee, EnvelopeSymbolic, SparseCholesky};
pub use csr::CsrMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
