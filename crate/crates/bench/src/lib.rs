//! Benchmark fixtures.

use oqseed_core::datasets::{Dataset, Normalizer};
use oqseed_core::envs::{collect_dataset, Env, Tier};
use oqseed_core::{Matrix, Rng};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("sized")
}

/// Normalized point-mass medium-tier data.
pub fn pointmass_data(n: usize, seed: u64) -> Dataset {
    let mut env = Env::pointmass();
    let policy = env.behavior_policy(Tier::Medium);
    let raw = collect_dataset(&mut env, &policy, n, seed).expect("collect");
    Normalizer::fit(&raw).and_then(|nm| nm.apply(&raw)).expect("normalize")
}
