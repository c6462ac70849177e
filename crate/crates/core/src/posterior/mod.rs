//! The unnormalised log posterior `log h(θ, y_u)` and its gradients.

mod layout;
mod logdet;
mod target;

pub use layout::{PriorSpec, ThetaLayout};
pub use logdet::{LogDetMethod, DEFAULT_PROBES, EXACT_TRACE_MAX_N};
pub use target::{Evaluation, PosteriorTarget, TargetDensity};
