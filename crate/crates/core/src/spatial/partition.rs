use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    First,
    Second,
}

/// Two-way split of `0..n`: the first group keeps the given order, the
/// second group is the sorted complement.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedView {
    n: usize,
    first: Vec<usize>,
    second: Vec<usize>,
}

impl PartitionedView {
    pub fn new(n: usize, first: &[usize]) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in first {
            if i >= n {
                return invalid("partition index out of range");
            }
            if seen[i] {
                return invalid("partition groups overlap");
            }
            seen[i] = true;
        }
        let second = (0..n).filter(|&i| !seen[i]).collect();
        Ok(Self { n, first: first.to_vec(), second })
    }

    /// Conditioning set `s_j` first, `block` second.
    pub fn for_block(n: usize, block: &[usize]) -> Result<Self> {
        let mut view = Self::new(n, block)?;
        core::mem::swap(&mut view.first, &mut view.second);
        Ok(view)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn indices(&self, g: Group) -> &[usize] {
        match g {
            Group::First => &self.first,
            Group::Second => &self.second,
        }
    }

    /// `perm[new] = old`: first group, then second.
    pub fn ordering(&self) -> Vec<usize> {
        self.first.iter().chain(&self.second).copied().collect()
    }

    pub fn sparse_block(&self, m: &CsrMatrix, rows: Group, cols: Group) -> CsrMatrix {
        m.submatrix(self.indices(rows), self.indices(cols))
    }

    pub fn dense_block(&self, m: &DMatrix<f64>, rows: Group, cols: Group) -> DMatrix<f64> {
        let (ri, ci) = (self.indices(rows), self.indices(cols));
        DMatrix::from_fn(ri.len(), ci.len(), |a, b| m[(ri[a], ci[b])])
    }

    /// Rows of a design matrix.
    pub fn rows(&self, x: &DMatrix<f64>, g: Group) -> DMatrix<f64> {
        let ri = self.indices(g);
        DMatrix::from_fn(ri.len(), x.ncols(), |a, b| x[(ri[a], b)])
    }

    pub fn vector(&self, v: &[f64], g: Group) -> Vec<f64> {
        self.indices(g).iter().map(|&i| v[i]).collect()
    }

    /// `P m Pᵀ` for the view ordering.
    pub fn permuted(&self, m: &CsrMatrix) -> CsrMatrix {
        let ord = self.ordering();
        m.submatrix(&ord, &ord)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_tile_the_parent() {
        let m = CsrMatrix::from_dense(&DMatrix::from_fn(4, 4, |i, j| (1 + i * 4 + j) as f64));
        let v = PartitionedView::new(4, &[0, 1]).unwrap();
        let p = v.permuted(&m).to_dense();
        let mut asm = DMatrix::zeros(4, 4);
        let (a, b) = (Group::First, Group::Second);
        asm.view_mut((0, 0), (2, 2)).copy_from(&v.sparse_block(&m, a, a).to_dense());
        asm.view_mut((0, 2), (2, 2)).copy_from(&v.sparse_block(&m, a, b).to_dense());
        asm.view_mut((2, 0), (2, 2)).copy_from(&v.sparse_block(&m, b, a).to_dense());
        asm.view_mut((2, 2), (2, 2)).copy_from(&v.sparse_block(&m, b, b).to_dense());
        assert_eq!(asm, p);
        assert!(PartitionedView::new(4, &[1, 1]).is_err());
    }

    #[test]
    fn single_index_block() {
        let m = CsrMatrix::from_dense(&DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 }));
        let v = PartitionedView::for_block(3, &[1]).unwrap();
        let b = v.sparse_block(&m, Group::Second, Group::Second);
        assert_eq!((b.nrows(), b.get(0, 0)), (1, 3.0));
        assert_eq!(v.indices(Group::First), &[0, 2]);
    }
}
