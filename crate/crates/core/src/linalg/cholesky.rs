//! Envelope (skyline) Cholesky factorisation for sparse SPD matrices.
//!
//! Rows are reordered with reverse Cuthill-McKee, then each row of the
//! factor is stored densely from its first non-zero to the diagonal.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::csr::CsrMatrix;
use crate::error::{invalid, Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Ordering and envelope layout for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct EnvelopeSymbolic {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
}

impl EnvelopeSymbolic {
    /// Analyses the pattern of a square matrix whose pattern is symmetric.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return invalid("cholesky needs a square matrix");
        }
        let perm = reverse_cuthill_mckee(a);
        Ok(Self::with_ordering(a, perm))
    }

    pub fn with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Self {
        let n = a.nrows();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old_i, old_j, _) in a.iter() {
            let (i, j) = (inv[old_i], inv[old_j]);
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            if lo < first[hi] {
                first[hi] = lo;
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            let len = i - first[i] + 1;
            row_start.push(row_start[i] + len);
        }
        Self { n, perm, inv, first, row_start }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.row_start[self.n]
    }

    /// Numeric factorisation of `a`, which must share the analysed pattern.
    /// Only the lower triangle (in the permuted order) is read.
    pub fn factor(&self, a: &CsrMatrix) -> Result<SparseCholesky> {
        let mut l = vec![0.0; self.envelope_size()];
        for (old_i, old_j, v) in a.iter() {
            let (i, j) = (self.inv[old_i], self.inv[old_j]);
            if j <= i {
                if j < self.first[i] {
                    return invalid("matrix pattern differs from the analysed pattern");
                }
                l[self.row_start[i] + (j - self.first[i])] += v;
            }
        }
        self.factor_in_place(l)
    }

    fn factor_in_place(&self, mut l: Vec<f64>) -> Result<SparseCholesky> {
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            for j in fi..i {
                let fj = self.first[j];
                let rj = self.row_start[j];
                let k0 = fi.max(fj);
                let a = &l[ri + (k0 - fi)..ri + (j - fi)];
                let b = &l[rj + (k0 - fj)..rj + (j - fj)];
                let s = dot(a, b);
                let ljj = l[rj + (j - fj)];
                let idx = ri + (j - fi);
                l[idx] = (l[idx] - s) / ljj;
            }
            let row = &l[ri..ri + (i - fi)];
            let d = l[ri + (i - fi)] - dot(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: self.perm[i] });
            }
            l[ri + (i - fi)] = d.sqrt();
        }
        Ok(SparseCholesky { sym: self.clone(), l })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `P A Pᵀ = L Lᵀ` with `L` stored in envelope form.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    sym: EnvelopeSymbolic,
    l: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        EnvelopeSymbolic::new(a)?.factor(a)
    }

    pub fn dim(&self) -> usize {
        self.sym.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.l[self.sym.row_start[i + 1] - 1]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.sym.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    /// Solves `L x = b` in place (permuted coordinates).
    fn forward(&self, x: &mut [f64]) {
        let s = &self.sym;
        for i in 0..s.n {
            let fi = s.first[i];
            let ri = s.row_start[i];
            let t = dot(&self.l[ri..ri + (i - fi)], &x[fi..i]);
            x[i] = (x[i] - t) / self.l[ri + (i - fi)];
        }
    }

    /// Solves `Lᵀ x = b` in place (permuted coordinates).
    fn backward(&self, x: &mut [f64]) {
        let s = &self.sym;
        for i in (0..s.n).rev() {
            let fi = s.first[i];
            let ri = s.row_start[i];
            x[i] /= self.l[ri + (i - fi)];
            let xi = x[i];
            for (k, lv) in self.l[ri..ri + (i - fi)].iter().enumerate() {
                x[fi + k] -= lv * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = self.sym.perm.iter().map(|&o| b[o]).collect();
        self.forward(&mut w);
        self.backward(&mut w);
        let mut x = vec![0.0; self.sym.n];
        for (new, &old) in self.sym.perm.iter().enumerate() {
            x[old] = w[new];
        }
        x
    }

    /// Returns `x` with `Cov(x) = A⁻¹` when `z` is standard normal:
    /// `x = Pᵀ L⁻ᵀ z`.
    pub fn solve_lt(&self, z: &[f64]) -> Vec<f64> {
        let mut w = z.to_vec();
        self.backward(&mut w);
        let mut x = vec![0.0; self.sym.n];
        for (new, &old) in self.sym.perm.iter().enumerate() {
            x[old] = w[new];
        }
        x
    }

    /// Quadratic form `bᵀ A⁻¹ b`.
    pub fn inv_quad(&self, b: &[f64]) -> f64 {
        let mut w: Vec<f64> = self.sym.perm.iter().map(|&o| b[o]).collect();
        self.forward(&mut w);
        dot(&w, &w)
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrised pattern of `a`.
/// Returns `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut scratch = Vec::new();
    loop {
        let Some(seed) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]) else {
            break;
        };
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            scratch.clear();
            scratch.extend(adj[v].iter().copied().filter(|&w| !visited[w]));
            scratch.sort_unstable_by_key(|&w| (degree[w], w));
            for &w in &scratch {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    let mut reached = Vec::new();
    level[start] = 0;
    queue.push_back(start);
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        reached.push(v);
        depth = depth.max(level[v]);
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let last: Vec<usize> = reached.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut v = seed;
    let (mut last, mut depth) = bfs_levels(v, adj);
    for _ in 0..8 {
        let Some(&cand) = last.iter().min_by_key(|&&w| degree[w]) else {
            break;
        };
        let (l2, d2) = bfs_levels(cand, adj);
        if d2 <= depth {
            break;
        }
        v = cand;
        last = l2;
        depth = d2;
    }
    v
}
