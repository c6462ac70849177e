//! Variational Bayes for the spatial error model with missing responses.
//!
//! The model is `y = Xβ + v`, `v = ρWv + e`, `e ~ N(0, σ²I)`, with part of
//! `y` unobserved either at random (MAR) or through a logistic selection
//! model on the response itself (MNAR). The crate provides the posterior
//! density and its gradients, conditional samplers for the missing block,
//! joint and hybrid Gaussian variational approximations, and a leapfrog HMC
//! baseline.
//!
//! `no_std` with `alloc`.
#![no_std]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod missing;
pub mod posterior;
pub mod samplers;
pub mod spatial;
pub mod vb;

pub use error::{Error, Result};
