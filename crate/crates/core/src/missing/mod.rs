//! Missingness patterns, the logistic selection model and data simulation.

mod pattern;
mod selection;
mod simulate;

pub use pattern::{
    generate_mar, make_blocks, mnar_default_block_size, round_half_even, single_block, BlockPartition, MissingPattern,
    MAR_GIBBS_BLOCK_SIZE,
};
pub use selection::{
    bernoulli_logit_log_prob, generate_mnar, logistic, selection_grad_psi, selection_grad_yu, selection_log_prob,
    softplus, SelectionModel,
};
pub use simulate::{simulate_dataset, simulate_sem, SimConfig, SimMechanism, SimulatedData, SimulatedSem};
