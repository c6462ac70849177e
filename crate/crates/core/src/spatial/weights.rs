use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::CsrMatrix;

/// Above this many units the smallest eigenvalue of `W` is found iteratively.
pub const DENSE_EIGEN_MAX_N: usize = 2000;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 200_000;

/// Sparse neighbourhood matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    matrix: CsrMatrix,
    row_normalized: bool,
    /// `s` with `diag(s) W` symmetric, when such a scaling is known.
    sym_scale: Option<Vec<f64>>,
}

impl SpatialWeights {
    /// Raw weights from 0-based `(i, j, w)` triplets. The pattern must be
    /// symmetric; duplicate entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, w) in triplets {
            if i == j {
                return invalid(format!("diagonal weight at unit {i}"));
            }
            if !w.is_finite() || w < 0.0 {
                return invalid(format!("weight ({i}, {j}) = {w} is not finite and non-negative"));
            }
        }
        let matrix = CsrMatrix::from_triplets(n, n, triplets)?;
        if !matrix.pattern_is_symmetric() {
            return invalid("weight pattern is not symmetric");
        }
        let sym_scale = matrix.is_symmetric(0.0).then(|| vec![1.0; n]);
        Ok(Self { matrix, row_normalized: false, sym_scale })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    /// Scales each row to sum to one. Fails on a unit without neighbours.
    pub fn row_normalize(&self) -> Result<Self> {
        let n = self.n();
        let mut sums = vec![0.0; n];
        for (i, s) in sums.iter_mut().enumerate() {
            *s = self.matrix.row(i).1.iter().sum();
            if !(*s > 0.0) {
                return Err(Error::DegenerateUnit { row: i });
            }
        }
        let mut matrix = self.matrix.clone();
        let indptr = matrix.indptr().to_vec();
        let vals = matrix.values_mut();
        for i in 0..n {
            for v in &mut vals[indptr[i]..indptr[i + 1]] {
                *v /= sums[i];
            }
        }
        let sym_scale = self.sym_scale.as_ref().map(|s| s.iter().zip(&sums).map(|(a, b)| a * b).collect());
        Ok(Self { matrix, row_normalized: true, sym_scale })
    }

    /// Symmetric matrix similar to `W`, if one is known:
    /// `S = diag(s)^{1/2} W diag(s)^{-1/2}`.
    pub fn symmetrized(&self) -> Option<CsrMatrix> {
        let s = self.sym_scale.as_ref()?;
        let mut m = self.matrix.clone();
        let indptr = m.indptr().to_vec();
        let indices = m.indices().to_vec();
        let vals = m.values_mut();
        for i in 0..s.len() {
            for k in indptr[i]..indptr[i + 1] {
                vals[k] *= (s[i] / s[indices[k]]).sqrt();
            }
        }
        Some(m)
    }

    /// All eigenvalues of `W`, ascending, when `W` is similar to a symmetric
    /// matrix. Dense `O(n³)` work.
    pub fn real_spectrum(&self) -> Option<Vec<f64>> {
        let s = self.symmetrized()?;
        let mut dense = s.to_dense();
        // enforce exact symmetry before the symmetric solver
        let t = dense.transpose();
        dense = (dense + t) * 0.5;
        let mut ev: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(ev)
    }

    /// Smallest (real part of an) eigenvalue of `W`.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let n = self.n();
        if n <= DENSE_EIGEN_MAX_N {
            if let Some(ev) = self.real_spectrum() {
                return Ok(ev[0]);
            }
            let dense: DMatrix<f64> = self.matrix.to_dense();
            let ev = dense.complex_eigenvalues();
            return ev
                .iter()
                .map(|z| z.re)
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
                .ok_or_else(|| Error::Numerical("empty spectrum".into()));
        }
        match self.symmetrized() {
            Some(s) => power_min_eigenvalue(&s, true),
            None => power_min_eigenvalue(&self.matrix, false),
        }
    }

    /// Admissible interval `(1/λ_min, 1)` for `ρ` under a row-normalised `W`.
    pub fn rho_interval(&self) -> Result<(f64, f64)> {
        if !self.row_normalized {
            return invalid("rho_interval needs row-normalised weights");
        }
        let lmin = self.min_eigenvalue()?;
        if !(lmin < 0.0) {
            return Err(Error::Numerical(format!("smallest eigenvalue {lmin} is not negative")));
        }
        Ok((1.0 / lmin, 1.0))
    }
}

/// Power iteration on `I − W`, whose dominant eigenvalue is `1 − λ_min`
/// for a row-normalised `W` with real spectrum in `[λ_min, 1]`.
fn power_min_eigenvalue(w: &CsrMatrix, symmetric: bool) -> Result<f64> {
    let n = w.nrows();
    let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.7 } + 1e-3 * i as f64).collect();
    normalize(&mut x);
    let mut wx = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..POWER_MAX_ITER {
        w.mul_vec_into(&x, &mut wx);
        let y: Vec<f64> = x.iter().zip(&wx).map(|(a, b)| a - b).collect();
        let next = if symmetric {
            x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()
        } else {
            y.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        x = y;
        normalize(&mut x);
        if (next - est).abs() <= POWER_TOL * next.abs().max(1.0) {
            return Ok(1.0 - next);
        }
        est = next;
    }
    Err(Error::Numerical("power iteration for the smallest eigenvalue did not converge".into()))
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= nrm;
    }
}

/// Rook adjacency on a `side × side` lattice; unit `(r, c)` has index
/// `r * side + c`. Raw weights are 1.
pub fn build_rook_grid_weights(side: usize) -> Result<SpatialWeights> {
    if side < 2 {
        return invalid("grid side must be at least 2");
    }
    let mut t = Vec::with_capacity(4 * side * side);
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            if r > 0 {
                t.push((i, i - side, 1.0));
            }
            if r + 1 < side {
                t.push((i, i + side, 1.0));
            }
            if c > 0 {
                t.push((i, i - 1, 1.0));
            }
            if c + 1 < side {
                t.push((i, i + 1, 1.0));
            }
        }
    }
    SpatialWeights::from_triplets(side * side, &t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rook_degrees() {
        let w = build_rook_grid_weights(3).unwrap();
        let deg: Vec<usize> = (0..9).map(|i| w.matrix().row(i).0.len()).collect();
        assert_eq!(deg, vec![2, 3, 2, 3, 4, 3, 2, 3, 2]);
        let w2 = build_rook_grid_weights(2).unwrap();
        assert!((0..4).all(|i| w2.matrix().row(i).0.len() == 2));
        assert!(build_rook_grid_weights(1).is_err());
    }

    #[test]
    fn normalization() {
        let w = SpatialWeights::from_triplets(
            4,
            &[(0, 1, 1.0), (1, 0, 1.0), (0, 3, 1.0), (3, 0, 1.0), (0, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap()
        .row_normalize()
        .unwrap();
        for j in 1..4 {
            assert!((w.matrix().get(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        let again = w.row_normalize().unwrap();
        for (a, b) in again.matrix().values().iter().zip(w.matrix().values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let corner = build_rook_grid_weights(3).unwrap().row_normalize().unwrap();
        assert_eq!(corner.matrix().row(0).1, &[0.5, 0.5]);
    }

    #[test]
    fn isolated_unit_is_rejected() {
        let w = SpatialWeights::from_triplets(3, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(w.row_normalize(), Err(Error::DegenerateUnit { row: 2 }));
    }

    #[test]
    fn asymmetric_pattern_is_rejected() {
        assert!(SpatialWeights::from_triplets(2, &[(0, 1, 1.0)]).is_err());
        assert!(SpatialWeights::from_triplets(2, &[(0, 1, -1.0), (1, 0, 1.0)]).is_err());
    }

    #[test]
    fn two_unit_interval() {
        let w = SpatialWeights::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap().row_normalize().unwrap();
        let (lo, hi) = w.rho_interval().unwrap();
        assert!((lo + 1.0).abs() < 1e-12);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let w = build_rook_grid_weights(6).unwrap();
        // unequal weights keep the graph symmetrisable but not bipartite-trivial
        let mut t: Vec<(usize, usize, f64)> = w.matrix().iter().collect();
        for e in t.iter_mut() {
            e.2 = 1.0 + ((e.0 + e.1) % 3) as f64;
        }
        t.push((0, 7, 2.0));
        t.push((7, 0, 2.0));
        let w = SpatialWeights::from_triplets(36, &t).unwrap().row_normalize().unwrap();
        let dense = w.min_eigenvalue().unwrap();
        let it = power_min_eigenvalue(&w.symmetrized().unwrap(), true).unwrap();
        assert!((dense - it).abs() < 1e-6, "{dense} vs {it}");
    }
}
