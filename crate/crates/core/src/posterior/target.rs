use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::layout::{PriorSpec, ThetaLayout};
use super::logdet::{LogDetEngine, LogDetMethod, DEFAULT_PROBES, EXACT_TRACE_MAX_N};
use crate::error::{invalid, Result};
use crate::missing::{bernoulli_logit_log_prob, logistic, MissingPattern, SelectionModel};
use crate::spatial::{drho_dlogit, logit_to_rho, residual, SemParams, SemPrecision, SpatialWeights, DENSE_EIGEN_MAX_N};

/// Densities consumed by the VB engines and HMC. `θ` has `theta_dim`
/// entries and the latent block (`y_u`) has `latent_dim`.
pub trait PosteriorTarget {
    fn theta_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;

    /// `log h` and its gradient over `χ = (θ, y_u)`.
    fn log_h_and_grad(&self, chi: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// `log h` and its `θ`-gradient at a fixed latent vector.
    fn log_h_and_grad_theta(&self, theta: &[f64], latent: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Map from unconstrained `θ` to the reported parameterisation.
    fn constrain_theta(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
}

/// Value and gradients of `log h(θ, y_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_h: f64,
    pub grad_theta: Vec<f64>,
    pub grad_yu: Vec<f64>,
}

/// Unnormalised log posterior of the SEM under MAR or MNAR.
#[derive(Debug, Clone)]
pub struct TargetDensity {
    x: DMatrix<f64>,
    precision: SemPrecision,
    pattern: MissingPattern,
    y_o: Vec<f64>,
    x_star: Option<DMatrix<f64>>,
    priors: PriorSpec,
    layout: ThetaLayout,
    logdet: LogDetEngine,
}

impl TargetDensity {
    /// MAR target. `w` must be row-normalised; `y_o` follows
    /// `pattern.observed_idx()`.
    pub fn mar(
        x: DMatrix<f64>,
        w: &SpatialWeights,
        y_o: Vec<f64>,
        pattern: MissingPattern,
        priors: PriorSpec,
    ) -> Result<Self> {
        Self::build(x, w, y_o, pattern, None, priors)
    }

    /// MNAR target with selection design `x_star` (first column ones).
    pub fn mnar(
        x: DMatrix<f64>,
        w: &SpatialWeights,
        y_o: Vec<f64>,
        pattern: MissingPattern,
        x_star: DMatrix<f64>,
        priors: PriorSpec,
    ) -> Result<Self> {
        if x_star.nrows() != x.nrows() {
            return invalid("x_star must have one row per unit");
        }
        // validates the intercept column
        SelectionModel::new(vec![0.0; x_star.ncols()], 0.0, x_star.clone())?;
        Self::build(x, w, y_o, pattern, Some(x_star), priors)
    }

    fn build(
        x: DMatrix<f64>,
        w: &SpatialWeights,
        y_o: Vec<f64>,
        pattern: MissingPattern,
        x_star: Option<DMatrix<f64>>,
        priors: PriorSpec,
    ) -> Result<Self> {
        priors.validate()?;
        let n = w.n();
        if x.nrows() != n || pattern.n() != n || y_o.len() != pattern.n_o() {
            return invalid("target dimension mismatch");
        }
        if !w.is_row_normalized() {
            return invalid("target needs row-normalised weights");
        }
        if y_o.iter().any(|v| !v.is_finite()) {
            return invalid("observed responses must be finite");
        }
        let spectrum = if n <= DENSE_EIGEN_MAX_N { w.real_spectrum() } else { None };
        let (precision, logdet) = match spectrum {
            Some(ev) => {
                let lmin = ev[0];
                let prec = SemPrecision::with_interval(w, (1.0 / lmin, 1.0))?;
                (prec, LogDetEngine::Spectral(ev))
            }
            None => (SemPrecision::new(w)?, LogDetEngine::Exact),
        };
        let layout = match &x_star {
            Some(xs) => ThetaLayout::mnar(x.ncols(), xs.ncols()),
            None => ThetaLayout::mar(x.ncols()),
        };
        let mut t = Self { x, precision, pattern, y_o, x_star, priors, layout, logdet };
        if t.n() > EXACT_TRACE_MAX_N && !matches!(t.logdet, LogDetEngine::Spectral(_)) {
            // deterministic probes unless the caller installs its own
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5eed);
            t.logdet = LogDetEngine::hutchinson(t.n(), DEFAULT_PROBES, &mut rng);
        }
        Ok(t)
    }

    /// Switches the log-determinant evaluation. `Spectral` needs weights
    /// similar to a symmetric matrix; probes are drawn from `rng`.
    pub fn set_log_det_method<R: Rng + ?Sized>(
        &mut self,
        method: LogDetMethod,
        w: &SpatialWeights,
        rng: &mut R,
    ) -> Result<()> {
        self.logdet = match method {
            LogDetMethod::Spectral => match w.real_spectrum() {
                Some(ev) => LogDetEngine::Spectral(ev),
                None => return invalid("spectral log-determinant needs symmetrisable weights"),
            },
            LogDetMethod::Exact => LogDetEngine::Exact,
            LogDetMethod::Hutchinson { probes } => LogDetEngine::hutchinson(self.n(), probes, rng),
        };
        Ok(())
    }

    pub fn log_det_method(&self) -> LogDetMethod {
        self.logdet.method()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_star(&self) -> Option<&DMatrix<f64>> {
        self.x_star.as_ref()
    }

    pub fn precision(&self) -> &SemPrecision {
        &self.precision
    }

    pub fn pattern(&self) -> &MissingPattern {
        &self.pattern
    }

    pub fn y_o(&self) -> &[f64] {
        &self.y_o
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn is_mnar(&self) -> bool {
        self.x_star.is_some()
    }

    /// `(β, σ², ρ)` encoded in `θ`.
    pub fn sem_params(&self, theta: &[f64]) -> SemParams {
        let l = self.layout;
        SemParams {
            beta: theta[..l.n_beta].to_vec(),
            sigma2_y: theta[l.gamma()].exp(),
            rho: logit_to_rho(theta[l.rho_logit()]),
        }
    }

    /// Selection model encoded in an MNAR `θ`.
    pub fn selection_model(&self, theta: &[f64]) -> Option<SelectionModel> {
        let xs = self.x_star.as_ref()?;
        let psi = &theta[self.layout.psi()];
        let q1 = psi.len() - 1;
        Some(SelectionModel { psi_x: psi[..q1].to_vec(), psi_y: psi[q1], x_star: xs.clone() })
    }

    /// Covariate part `x*_i ψ_x` of the selection predictor.
    pub fn selection_offset(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let xs = self.x_star.as_ref()?;
        let psi = &theta[self.layout.psi()];
        Some((0..xs.nrows()).map(|i| (0..xs.ncols()).map(|k| xs[(i, k)] * psi[k]).sum()).collect())
    }

    fn check_dims(&self, theta: &[f64], y_u: &[f64]) -> Result<()> {
        if theta.len() != self.layout.dim() || y_u.len() != self.pattern.n_u() {
            return invalid("theta or y_u has the wrong length");
        }
        Ok(())
    }

    /// `log h(θ, y_u)` up to an additive constant.
    pub fn log_h(&self, theta: &[f64], y_u: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta, y_u, false)?.log_h)
    }

    pub fn grad_log_h_theta(&self, theta: &[f64], y_u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(theta, y_u, true)?.grad_theta)
    }

    pub fn grad_log_h_yu(&self, theta: &[f64], y_u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(theta, y_u, true)?.grad_yu)
    }

    /// Value and (optionally) gradients in one pass.
    pub fn evaluate(&self, theta: &[f64], y_u: &[f64], with_grad: bool) -> Result<Evaluation> {
        self.check_dims(theta, y_u)?;
        let l = self.layout;
        let n = self.n() as f64;
        let beta = &theta[..l.n_beta];
        let gamma = theta[l.gamma()];
        let lam = theta[l.rho_logit()];
        let rho = logit_to_rho(lam);
        self.precision.check_rho(rho)?;

        let y = self.pattern.assemble(&self.y_o, y_u);
        let r = residual(&y, &self.x, beta);
        let (quad, dquad, mr) = self.precision.residual_forms(rho, &r);
        let (ld, dld) = self.logdet.eval(&self.precision, rho, with_grad)?;
        let e = (-gamma).exp();
        let p = &self.priors;

        let bb: f64 = beta.iter().map(|b| b * b).sum();
        let mut log_h = -0.5 * n * gamma + 0.5 * ld
            - 0.5 * e * quad
            - bb / (2.0 * p.var_beta)
            - gamma * gamma / (2.0 * p.var_gamma)
            - lam * lam / (2.0 * p.var_rho_logit);

        let mut grad_theta = Vec::new();
        let mut grad_yu = Vec::new();
        if with_grad {
            grad_theta = vec![0.0; l.dim()];
            for k in 0..l.n_beta {
                let xk = self.x.column(k);
                let s: f64 = xk.iter().zip(&mr).map(|(a, b)| a * b).sum();
                grad_theta[k] = e * s - beta[k] / p.var_beta;
            }
            grad_theta[l.gamma()] = -0.5 * n + 0.5 * e * quad - gamma / p.var_gamma;
            grad_theta[l.rho_logit()] = (0.5 * dld - 0.5 * e * dquad) * drho_dlogit(lam) - lam / p.var_rho_logit;
            grad_yu = self.pattern.unobserved_idx().iter().map(|&i| -e * mr[i]).collect();
        }

        if let Some(xs) = &self.x_star {
            let psi = &theta[l.psi()];
            let q1 = psi.len() - 1;
            let psi_y = psi[q1];
            let mut g_psi = vec![0.0; psi.len()];
            for i in 0..self.n() {
                let mut t = psi_y * y[i];
                for k in 0..q1 {
                    t += xs[(i, k)] * psi[k];
                }
                let missing = self.pattern.is_missing(i);
                log_h += bernoulli_logit_log_prob(missing, t);
                if with_grad {
                    let resid = f64::from(u8::from(missing)) - logistic(t);
                    for k in 0..q1 {
                        g_psi[k] += resid * xs[(i, k)];
                    }
                    g_psi[q1] += resid * y[i];
                    if missing {
                        grad_yu[self.pattern.slot(i)] += resid * psi_y;
                    }
                }
            }
            let pp: f64 = psi.iter().map(|v| v * v).sum();
            log_h -= pp / (2.0 * p.var_psi);
            if with_grad {
                for (k, g) in g_psi.into_iter().enumerate() {
                    grad_theta[l.psi().start + k] = g - psi[k] / p.var_psi;
                }
            }
        }

        if !log_h.is_finite() {
            return Err(crate::Error::Numerical("log h is not finite".into()));
        }
        Ok(Evaluation { log_h, grad_theta, grad_yu })
    }
}

impl PosteriorTarget for TargetDensity {
    fn theta_dim(&self) -> usize {
        self.layout.dim()
    }

    fn latent_dim(&self) -> usize {
        self.pattern.n_u()
    }

    fn log_h_and_grad(&self, chi: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s = self.layout.dim();
        if chi.len() != s + self.pattern.n_u() {
            return invalid("chi has the wrong length");
        }
        let ev = self.evaluate(&chi[..s], &chi[s..], true)?;
        let mut g = ev.grad_theta;
        g.extend_from_slice(&ev.grad_yu);
        Ok((ev.log_h, g))
    }

    fn log_h_and_grad_theta(&self, theta: &[f64], latent: &[f64]) -> Result<(f64, Vec<f64>)> {
        let ev = self.evaluate(theta, latent, true)?;
        Ok((ev.log_h, ev.grad_theta))
    }

    fn constrain_theta(&self, theta: &[f64]) -> Vec<f64> {
        self.layout.constrain(theta)
    }
}
