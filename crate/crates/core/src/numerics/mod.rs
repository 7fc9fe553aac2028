//! Dense matrices, a fixed-shape MLP with hand-derived backprop, Adam, seeded
//! randomness and the small linear-algebra toolbox the rest of the crate uses.

mod adam;
mod linalg;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use linalg::{project_onto_columns, singular_values, solve_linear, svd_rank, PIVOT_TOL};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardCache, MlpGrads, MlpNet};
pub use rng::{derive_seed, Rng};

/// Default relative tolerance for latent-rank diagnostics.
pub const RANK_TOL_DIAGNOSTIC: f64 = 1e-3;
/// Relative tolerance used where rank must be exact.
pub const RANK_TOL_EXACT: f64 = 1e-6;

