//! Gaussian variational approximations with factor covariance.

mod adadelta;
mod diagnostics;
mod estimators;
mod family;
mod fit;

pub use adadelta::{adadelta_step, AdadeltaState, DEFAULT_ALPHA, DEFAULT_UPSILON};
pub use diagnostics::{moving_average, slope, tail_slopes};
pub use estimators::{hvb_gradient_estimate, jvb_gradient_at, jvb_gradient_estimate, vech, GradientEstimate};
pub use family::{draw_variational, grad_log_q, is_free, log_q, mask, woodbury_solve, ReparamDraw, VParams, Woodbury};
pub use fit::{
    fit_sem, hvb_fit, initial_joint, initial_theta, jvb_fit, jvb_fit_observed, FitResult, LastAcceptance, Summary,
    VbConfig, VbMethod, LOW_ACCEPTANCE,
};
