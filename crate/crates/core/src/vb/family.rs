use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Gaussian `N(μ, BBᵀ + D²)` with `D = diag(d)`. Entries `B[i][j]` with
/// `j > i` are structural zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct VParams {
    pub mu: Vec<f64>,
    pub b: DMatrix<f64>,
    pub d: Vec<f64>,
}

/// Standard normal inputs of one reparameterised draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamDraw {
    pub eta: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Whether `B[i][j]` is a free parameter.
#[inline]
pub fn is_free(i: usize, j: usize) -> bool {
    j <= i
}

impl VParams {
    /// `p` factors with free loadings set to `b0` and `d` set to `d0`.
    pub fn new(mu: Vec<f64>, p: usize, b0: f64, d0: f64) -> Result<Self> {
        let dim = mu.len();
        if p > dim {
            return invalid("factor count exceeds the dimension");
        }
        if d0 == 0.0 || !d0.is_finite() || !b0.is_finite() {
            return invalid("initial scales must be finite with d non-zero");
        }
        let b = DMatrix::from_fn(dim, p, |i, j| if is_free(i, j) { b0 } else { 0.0 });
        Ok(Self { d: vec![d0; dim], mu, b })
    }

    pub fn from_parts(mu: Vec<f64>, mut b: DMatrix<f64>, d: Vec<f64>) -> Result<Self> {
        if b.nrows() != mu.len() || d.len() != mu.len() || b.ncols() > mu.len() {
            return invalid("variational parameter shapes disagree");
        }
        if d.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return invalid("every d entry must be finite and non-zero");
        }
        mask(&mut b);
        Ok(Self { mu, b, d })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// `μ + Bη + d∘ε`.
    pub fn transform(&self, draw: &ReparamDraw) -> Vec<f64> {
        let be = &self.b * DVector::from_column_slice(&draw.eta);
        (0..self.dim()).map(|i| self.mu[i] + be[i] + self.d[i] * draw.eps[i]).collect()
    }

    /// Marginal standard deviations `sqrt(diag(BBᵀ) + d²)`.
    pub fn marginal_sd(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.b.row(i).iter().map(|v| v * v).sum::<f64>() + self.d[i] * self.d[i]).sqrt())
            .collect()
    }

    /// Dense `BBᵀ + D²`, for tests and small problems.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut c = &self.b * self.b.transpose();
        for i in 0..self.dim() {
            c[(i, i)] += self.d[i] * self.d[i];
        }
        c
    }

    /// Marginal of the leading `k` coordinates: `B` keeps its rows `0..k`.
    pub fn leading(&self, k: usize) -> Self {
        let k = k.min(self.dim());
        Self { mu: self.mu[..k].to_vec(), b: self.b.rows(0, k).into_owned(), d: self.d[..k].to_vec() }
    }

    /// Non-finite entries anywhere.
    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(self.b.iter()).chain(&self.d).all(|v| v.is_finite())
    }
}

/// Zeroes the structural-zero entries of `b`.
pub fn mask(b: &mut DMatrix<f64>) {
    for j in 0..b.ncols() {
        for i in 0..j.min(b.nrows()) {
            b[(i, j)] = 0.0;
        }
    }
}

/// One draw `(μ + Bη + d∘ε, (η, ε))`.
pub fn draw_variational<R: Rng + ?Sized>(vp: &VParams, rng: &mut R) -> (Vec<f64>, ReparamDraw) {
    let eta: Vec<f64> = (0..vp.p()).map(|_| rng.sample(StandardNormal)).collect();
    let eps: Vec<f64> = (0..vp.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let draw = ReparamDraw { eta, eps };
    (vp.transform(&draw), draw)
}

/// Factorisation of `BBᵀ + D²` through the `p × p` capacitance matrix
/// `I + BᵀD⁻²B`.
#[derive(Debug, Clone)]
pub struct Woodbury<'a> {
    b: &'a DMatrix<f64>,
    inv_d2: Vec<f64>,
    cap: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl<'a> Woodbury<'a> {
    pub fn new(b: &'a DMatrix<f64>, d: &[f64]) -> Result<Self> {
        if d.len() != b.nrows() {
            return invalid("d and B disagree in length");
        }
        if d.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::Numerical("d has a zero or non-finite entry".into()));
        }
        let inv_d2: Vec<f64> = d.iter().map(|v| 1.0 / (v * v)).collect();
        let p = b.ncols();
        let mut cap = DMatrix::identity(p, p);
        for a in 0..p {
            for c in a..p {
                let s: f64 = (0..b.nrows()).map(|i| b[(i, a)] * b[(i, c)] * inv_d2[i]).sum();
                cap[(a, c)] += s;
                if a != c {
                    cap[(c, a)] += s;
                }
            }
        }
        let cap =
            Cholesky::new(cap).ok_or_else(|| Error::Numerical("capacitance matrix is not positive definite".into()))?;
        let log_det = d.iter().map(|v| (v * v).ln()).sum::<f64>()
            + 2.0 * cap.l_dirty().diagonal().iter().map(|v: &f64| v.ln()).sum::<f64>();
        Ok(Self { b, inv_d2, cap, log_det })
    }

    /// `(BBᵀ + D²)⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = v.iter().zip(&self.inv_d2).map(|(a, s)| a * s).collect();
        let btw = self.b.tr_mul(&DVector::from_column_slice(&w));
        let z = self.cap.solve(&btw);
        let bz = self.b * z;
        w.iter().zip(&self.inv_d2).zip(bz.iter()).map(|((wi, s), c)| wi - s * c).collect()
    }

    /// `log |BBᵀ + D²|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }
}

/// `(BBᵀ + D²)⁻¹ v` by the Woodbury identity.
pub fn woodbury_solve(b: &DMatrix<f64>, d: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != d.len() {
        return invalid("vector length disagrees with d");
    }
    Ok(Woodbury::new(b, d)?.solve(v))
}

/// `log q(x)`.
pub fn log_q(vp: &VParams, x: &[f64]) -> Result<f64> {
    let wb = Woodbury::new(&vp.b, &vp.d)?;
    Ok(log_q_with(vp, &wb, x))
}

pub(crate) fn log_q_with(vp: &VParams, wb: &Woodbury<'_>, x: &[f64]) -> f64 {
    let r: Vec<f64> = x.iter().zip(&vp.mu).map(|(a, m)| a - m).collect();
    let s = wb.solve(&r);
    let quad: f64 = r.iter().zip(&s).map(|(a, b)| a * b).sum();
    -0.5 * vp.dim() as f64 * (2.0 * PI).ln() - 0.5 * wb.log_det() - 0.5 * quad
}

/// `∇ log q(x) = −(BBᵀ + D²)⁻¹(x − μ)`.
pub fn grad_log_q(vp: &VParams, x: &[f64]) -> Result<Vec<f64>> {
    let r: Vec<f64> = x.iter().zip(&vp.mu).map(|(a, m)| a - m).collect();
    Ok(woodbury_solve(&vp.b, &vp.d, &r)?.into_iter().map(|v| -v).collect())
}
