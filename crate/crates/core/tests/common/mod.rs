#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spatialvb_core::missing::MissingPattern;
use spatialvb_core::posterior::{PosteriorTarget, PriorSpec, TargetDensity};
use spatialvb_core::samplers::LatentSampler;
use spatialvb_core::spatial::{build_rook_grid_weights, SpatialWeights};
use spatialvb_core::vb::{GradientEstimate, LastAcceptance, VParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn grid(side: usize) -> SpatialWeights {
    build_rook_grid_weights(side).unwrap().row_normalize().unwrap()
}

/// Irregular symmetric weights: a rook grid plus random extra links with
/// random positive weights.
pub fn irregular(side: usize, rng: &mut impl Rng) -> SpatialWeights {
    let base = build_rook_grid_weights(side).unwrap();
    let n = base.n();
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    for (i, j, _) in base.matrix().iter() {
        if i < j {
            let w = 0.5 + rng.random::<f64>();
            t.push((i, j, w));
            t.push((j, i, w));
        }
    }
    for _ in 0..n / 3 {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && !t.iter().any(|e| e.0 == i && e.1 == j) {
            let w = 0.5 + rng.random::<f64>();
            t.push((i, j, w));
            t.push((j, i, w));
        }
    }
    SpatialWeights::from_triplets(n, &t).unwrap().row_normalize().unwrap()
}

pub fn design(n: usize, r: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, r + 1, |_, j| if j == 0 { 1.0 } else { normal(rng) })
}

pub fn random_pattern(n: usize, n_u: usize, rng: &mut impl Rng) -> MissingPattern {
    let idx = rand::seq::index::sample(rng, n, n_u).into_vec();
    MissingPattern::from_unobserved(n, &idx).unwrap()
}

/// Dense `(I − ρW)ᵀ(I − ρW)`.
pub fn dense_precision(w: &SpatialWeights, rho: f64) -> DMatrix<f64> {
    let n = w.n();
    let a = DMatrix::identity(n, n) - w.matrix().to_dense() * rho;
    a.transpose() * a
}

pub fn dense_logdet(m: &DMatrix<f64>) -> f64 {
    let ch = m.clone().cholesky().expect("SPD");
    2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Generic multivariate normal log-density from a dense covariance.
pub fn mvn_logpdf(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let ch = cov.clone().cholesky().expect("SPD covariance");
    let d = y - mean;
    let sol = ch.solve(&d);
    let ld = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * ld - 0.5 * d.dot(&sol)
}

pub struct Instance {
    pub target: TargetDensity,
    pub w: SpatialWeights,
    pub theta: Vec<f64>,
    pub y_u: Vec<f64>,
}

/// Random MAR or MNAR target with a random evaluation point.
pub fn random_instance(side: usize, n_u: usize, mnar: bool, rng: &mut ChaCha8Rng) -> Instance {
    let w = if rng.random::<bool>() { grid(side) } else { irregular(side, rng) };
    let n = w.n();
    let r = 2;
    let x = design(n, r, rng);
    let pattern = random_pattern(n, n_u, rng);
    let y_o: Vec<f64> = (0..pattern.n_o()).map(|_| 2.0 * normal(rng)).collect();
    let priors = PriorSpec { var_beta: 3.0, var_gamma: 2.0, var_rho_logit: 5.0, var_psi: 4.0 };
    let target = if mnar {
        let xs = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[(i, 1)] });
        TargetDensity::mnar(x, &w, y_o, pattern, xs, priors).unwrap()
    } else {
        TargetDensity::mar(x, &w, y_o, pattern, priors).unwrap()
    };
    let s = target.layout().dim();
    let mut theta: Vec<f64> = (0..s).map(|_| 0.5 * normal(rng)).collect();
    theta[target.layout().rho_logit()] = 2.0 * rng.random::<f64>() - 0.5;
    let y_u = (0..n_u).map(|_| 2.0 * normal(rng)).collect();
    Instance { target, w, theta, y_u }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// First and second moments per coordinate with standard errors.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub se_second: Vec<f64>,
}

/// Self-normalised weighted moments; SE by the delta method.
pub fn weighted_moments(draws: &[Vec<f64>], weights: &[f64]) -> Moments {
    let d = draws[0].len();
    let sw: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    let mut second = vec![0.0; d];
    for (x, w) in draws.iter().zip(weights) {
        for k in 0..d {
            mean[k] += w * x[k] / sw;
            second[k] += w * x[k] * x[k] / sw;
        }
    }
    let mut vm = vec![0.0; d];
    let mut vs = vec![0.0; d];
    for (x, w) in draws.iter().zip(weights) {
        let a = w / sw;
        for k in 0..d {
            vm[k] += a * a * (x[k] - mean[k]).powi(2);
            vs[k] += a * a * (x[k] * x[k] - second[k]).powi(2);
        }
    }
    Moments {
        mean,
        second,
        se_mean: vm.iter().map(|v| v.sqrt()).collect(),
        se_second: vs.iter().map(|v| v.sqrt()).collect(),
    }
}

pub fn iid_moments(draws: &[Vec<f64>]) -> Moments {
    weighted_moments(draws, &vec![1.0; draws.len()])
}

/// Moments of a correlated chain with batch-means standard errors.
pub fn chain_moments(draws: &[Vec<f64>], batches: usize) -> Moments {
    let d = draws[0].len();
    let per = draws.len() / batches;
    let used = &draws[..per * batches];
    let mut m = iid_moments(used);
    for k in 0..d {
        let (mut vm, mut vs) = (0.0, 0.0);
        for b in used.chunks(per) {
            let bm: f64 = b.iter().map(|x| x[k]).sum::<f64>() / per as f64;
            let bs: f64 = b.iter().map(|x| x[k] * x[k]).sum::<f64>() / per as f64;
            vm += (bm - m.mean[k]).powi(2);
            vs += (bs - m.second[k]).powi(2);
        }
        let nb = batches as f64;
        m.se_mean[k] = (vm / (nb - 1.0) / nb).sqrt();
        m.se_second[k] = (vs / (nb - 1.0) / nb).sqrt();
    }
    m
}

/// Largest standardised gap between two sets of moments.
pub fn max_z(a: &Moments, b: &Moments) -> f64 {
    let mut z: f64 = 0.0;
    for k in 0..a.mean.len() {
        z = z.max((a.mean[k] - b.mean[k]).abs() / (a.se_mean[k].powi(2) + b.se_mean[k].powi(2)).sqrt());
        z = z.max((a.second[k] - b.second[k]).abs() / (a.se_second[k].powi(2) + b.se_second[k].powi(2)).sqrt());
    }
    z
}

/// Small MNAR instance with a strong response effect in the selection model.
pub fn small_mnar(side: usize, n_u: usize, psi_y: f64, rng: &mut ChaCha8Rng) -> (TargetDensity, Vec<f64>) {
    let w = grid(side);
    let n = w.n();
    let x = design(n, 1, rng);
    let pattern = random_pattern(n, n_u, rng);
    let y_o: Vec<f64> = (0..pattern.n_o()).map(|_| normal(rng)).collect();
    let xs = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[(i, 1)] });
    let target = TargetDensity::mnar(x, &w, y_o, pattern, xs, PriorSpec::default()).unwrap();
    let l = target.layout();
    let mut theta = vec![0.0; l.dim()];
    theta[0] = 0.5;
    theta[1] = 1.0;
    theta[l.gamma()] = 0.0;
    theta[l.rho_logit()] = spatialvb_core::spatial::rho_to_logit(0.6).unwrap();
    let p = l.psi();
    theta[p.start] = 0.2;
    theta[p.start + 1] = 0.5;
    theta[p.end - 1] = psi_y;
    (target, theta)
}

pub fn random_vp(dim: usize, p: usize, rng: &mut impl Rng) -> VParams {
    let mu = (0..dim).map(|_| normal(rng)).collect();
    let b = DMatrix::from_fn(dim, p, |_, _| 0.5 * normal(rng));
    let d =
        (0..dim).map(|_| (0.3 + 1.7 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    VParams::from_parts(mu, b, d).unwrap()
}

/// Normalised Gaussian `N(m, S)` over `(θ, latent)`.
#[derive(Clone)]
pub struct Gauss {
    pub s: usize,
    pub m: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub prec: DMatrix<f64>,
}

impl Gauss {
    pub fn new(s: usize, m: Vec<f64>, cov: DMatrix<f64>) -> Self {
        let prec = cov.clone().try_inverse().unwrap();
        Self { s, m: DVector::from_vec(m), cov, prec }
    }

    pub fn random(s: usize, latent: usize, rng: &mut impl Rng) -> Self {
        let d = s + latent;
        let a = DMatrix::from_fn(d, d, |_, _| 0.6 * normal(rng));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
        Self::new(s, (0..d).map(|_| normal(rng)).collect(), cov)
    }

    pub fn logpdf_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let dx = DVector::from_column_slice(x) - &self.m;
        let g = -(&self.prec * &dx);
        (mvn_logpdf(&DVector::from_column_slice(x), &self.m, &self.cov), g.iter().copied().collect())
    }

    /// Closed-form `E_q log h + H(q)` over the leading `k` coordinates,
    /// with `h` the marginal of `N(m, S)` there.
    pub fn elbo(&self, vp: &VParams) -> f64 {
        let k = vp.dim();
        let s = self.cov.view((0, 0), (k, k)).into_owned();
        let sp = s.clone().try_inverse().unwrap();
        let sig = vp.covariance();
        let dm = DVector::from_column_slice(&vp.mu) - self.m.rows(0, k);
        let l2p = (2.0 * std::f64::consts::PI).ln();
        let e_log_h = -0.5 * (k as f64 * l2p + s.determinant().ln() + (&sp * &sig).trace() + dm.dot(&(&sp * &dm)));
        let ent = 0.5 * (k as f64 * (1.0 + l2p) + sig.determinant().ln());
        e_log_h + ent
    }
}

impl PosteriorTarget for Gauss {
    fn theta_dim(&self) -> usize {
        self.s
    }
    fn latent_dim(&self) -> usize {
        self.m.len() - self.s
    }
    fn log_h_and_grad(&self, chi: &[f64]) -> spatialvb_core::Result<(f64, Vec<f64>)> {
        Ok(self.logpdf_grad(chi))
    }
    fn log_h_and_grad_theta(&self, theta: &[f64], latent: &[f64]) -> spatialvb_core::Result<(f64, Vec<f64>)> {
        let mut x = theta.to_vec();
        x.extend_from_slice(latent);
        let (v, mut g) = self.logpdf_grad(&x);
        g.truncate(self.s);
        Ok((v, g))
    }
}

/// Exact conditional sampler for the latent block of a [`Gauss`].
pub struct ExactLatent {
    pub g: Gauss,
}

impl LatentSampler for ExactLatent {
    fn sample_latent<R: Rng + ?Sized>(&mut self, theta: &[f64], rng: &mut R) -> spatialvb_core::Result<Vec<f64>> {
        let s = self.g.s;
        let l = self.g.m.len() - s;
        let p = &self.g.prec;
        // latent | θ has precision P_ll and mean m_l − P_ll⁻¹ P_lθ (θ − m_θ)
        let pll = p.view((s, s), (l, l)).into_owned();
        let plt = p.view((s, 0), (l, s)).into_owned();
        let dt = DVector::from_column_slice(theta) - self.g.m.rows(0, s);
        let ch = pll.cholesky().unwrap();
        let mean = self.g.m.rows(s, l) - ch.solve(&(plt * dt));
        let z = DVector::from_fn(l, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let x = ch.l().transpose().solve_upper_triangular(&z).unwrap();
        Ok((mean + x).iter().copied().collect())
    }
    fn acceptance_rate(&self) -> Option<f64> {
        None
    }
}

impl LastAcceptance for ExactLatent {
    fn last_acceptance(&self) -> Option<f64> {
        None
    }
}

pub fn flatten(e: &GradientEstimate) -> Vec<f64> {
    let mut v = e.grad_mu.clone();
    v.extend(e.vech_b());
    v.extend(&e.grad_d);
    v
}

/// Empirical mean and SE of flattened estimates.
pub fn mean_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = iid_moments(samples);
    (m.mean, m.se_mean)
}

pub fn fd_elbo(g: &Gauss, vp: &VParams) -> Vec<f64> {
    let h = 1e-6;
    let f = |v: &VParams| g.elbo(v);
    let mut out = Vec::new();
    for i in 0..vp.dim() {
        let (mut a, mut b) = (vp.clone(), vp.clone());
        a.mu[i] += h;
        b.mu[i] -= h;
        out.push((f(&a) - f(&b)) / (2.0 * h));
    }
    for j in 0..vp.p() {
        for i in j..vp.dim() {
            let (mut a, mut b) = (vp.clone(), vp.clone());
            a.b[(i, j)] += h;
            b.b[(i, j)] -= h;
            out.push((f(&a) - f(&b)) / (2.0 * h));
        }
    }
    for i in 0..vp.dim() {
        let (mut a, mut b) = (vp.clone(), vp.clone());
        a.d[i] += h;
        b.d[i] -= h;
        out.push((f(&a) - f(&b)) / (2.0 * h));
    }
    out
}

/// Joint Gaussian whose θ-marginal is exactly `q`, with two latent
/// coordinates linear in θ plus noise.
pub fn hvb_self_target(vp: &VParams, rng: &mut impl Rng) -> Gauss {
    let s = vp.dim();
    let st = vp.covariance();
    let a = DMatrix::from_fn(2, s, |_, _| 0.4 * normal(rng));
    let mut cov = DMatrix::zeros(s + 2, s + 2);
    cov.view_mut((0, 0), (s, s)).copy_from(&st);
    let c = &a * &st;
    cov.view_mut((s, 0), (2, s)).copy_from(&c);
    cov.view_mut((0, s), (s, 2)).copy_from(&c.transpose());
    let cll = &a * &st * a.transpose() + DMatrix::identity(2, 2) * 0.7;
    cov.view_mut((s, s), (2, 2)).copy_from(&cll);
    let mut m = vp.mu.clone();
    m.extend([0.3, -0.2]);
    Gauss::new(s, m, cov)
}
