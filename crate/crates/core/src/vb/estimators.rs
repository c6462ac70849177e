use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::family::{draw_variational, log_q_with, mask, ReparamDraw, VParams, Woodbury};
use crate::error::{invalid, Result};
use crate::posterior::PosteriorTarget;

/// Single-draw ELBO gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad_mu: Vec<f64>,
    /// Same shape as `B`, structural zeros masked.
    pub grad_b: DMatrix<f64>,
    pub grad_d: Vec<f64>,
    /// `log h − log q` at the draw; a proxy under HVB.
    pub elbo: f64,
}

impl GradientEstimate {
    pub fn is_finite(&self) -> bool {
        self.elbo.is_finite()
            && self.grad_mu.iter().chain(self.grad_b.iter()).chain(&self.grad_d).all(|v| v.is_finite())
    }

    /// Free `B` entries, stacked column by column.
    pub fn vech_b(&self) -> Vec<f64> {
        vech(&self.grad_b)
    }
}

/// Free entries of `b`, column by column.
pub fn vech(b: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..b.ncols() {
        for i in j..b.nrows() {
            out.push(b[(i, j)]);
        }
    }
    out
}

/// Builds the estimate from `g = ∇ log h` at `x = u(ζ, λ)`.
pub(crate) fn assemble(
    vp: &VParams,
    wb: &Woodbury<'_>,
    draw: &ReparamDraw,
    x: &[f64],
    g: &[f64],
    log_h: f64,
) -> GradientEstimate {
    // Bη + d∘ε = x − μ
    let dev: Vec<f64> = x.iter().zip(&vp.mu).map(|(a, m)| a - m).collect();
    let corr = wb.solve(&dev);
    let grad_mu: Vec<f64> = g.iter().zip(&corr).map(|(a, c)| a + c).collect();
    let mut grad_b = DVector::from_column_slice(&grad_mu) * DVector::from_column_slice(&draw.eta).transpose();
    mask(&mut grad_b);
    let grad_d = grad_mu.iter().zip(&draw.eps).map(|(a, e)| a * e).collect();
    let elbo = log_h - log_q_with(vp, wb, x);
    GradientEstimate { grad_mu, grad_b, grad_d, elbo }
}

/// Joint estimate at a given draw over `χ = (θ, latent)`.
pub fn jvb_gradient_at<T: PosteriorTarget + ?Sized>(
    vp: &VParams,
    target: &T,
    draw: &ReparamDraw,
) -> Result<GradientEstimate> {
    if vp.dim() != target.theta_dim() + target.latent_dim() {
        return invalid("variational dimension must equal theta plus latent dimension");
    }
    let wb = Woodbury::new(&vp.b, &vp.d)?;
    let x = vp.transform(draw);
    let (lh, g) = target.log_h_and_grad(&x)?;
    Ok(assemble(vp, &wb, draw, &x, &g, lh))
}

/// Joint estimate with a fresh draw.
pub fn jvb_gradient_estimate<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
    vp: &VParams,
    target: &T,
    rng: &mut R,
) -> Result<(GradientEstimate, ReparamDraw)> {
    let (_, draw) = draw_variational(vp, rng);
    Ok((jvb_gradient_at(vp, target, &draw)?, draw))
}

/// Hybrid estimate over `θ` at the draw `theta_draw`, with the latent block
/// fixed at a sample from its conditional.
pub fn hvb_gradient_estimate<T: PosteriorTarget + ?Sized>(
    vp_theta: &VParams,
    target: &T,
    latent: &[f64],
    theta_draw: &ReparamDraw,
) -> Result<GradientEstimate> {
    if vp_theta.dim() != target.theta_dim() || latent.len() != target.latent_dim() {
        return invalid("hybrid dimensions disagree with the target");
    }
    let wb = Woodbury::new(&vp_theta.b, &vp_theta.d)?;
    let theta = vp_theta.transform(theta_draw);
    let (lh, g) = target.log_h_and_grad_theta(&theta, latent)?;
    Ok(assemble(vp_theta, &wb, theta_draw, &theta, &g, lh))
}
