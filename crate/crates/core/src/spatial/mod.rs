//! Spatial weights, SEM precision algebra and the parameter bijection.

mod params;
mod partition;
mod precision;
mod weights;

pub use params::{
    drho_dlogit, from_unconstrained, logit_to_rho, rho_to_logit, to_unconstrained, SemParams, UnconstrainedSemParams,
};
pub use partition::{Group, PartitionedView};
pub use precision::{precision_matrix, residual, sem_log_likelihood, SemPrecision, RHO_MARGIN};
pub use weights::{build_rook_grid_weights, SpatialWeights, DENSE_EIGEN_MAX_N};
