//! Offline RL with transition-model pretraining of a shared Q-network
//! backbone, plus the linear-feature analysis (projected Bellman fixed points,
//! error-bound audits, latent rank) used to study it.
//!
//! Module map:
//! - [`numerics`]: matrices, MLP forward/backward, Adam, SVD rank, linear solves
//! - [`envs`]: gridworld and point-mass environments, behavior policies, data collection
//! - [`datasets`]: transitions, reductions, normalization, the `OQD1` file format
//! - [`shared_qnet`]: the shared backbone with transition and Q heads, pretraining
//! - [`offline_rl`]: TD3+BC, discrete conservative Q-learning, evaluation
//! - [`analysis`]: exact Q, feature matrices, projected Bellman solutions, audits

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod datasets;
pub mod envs;
pub mod error;
pub mod numerics;
pub mod offline_rl;
pub mod shared_qnet;

pub use error::{Error, Result};
pub use numerics::{Matrix, MlpNet, Rng};
