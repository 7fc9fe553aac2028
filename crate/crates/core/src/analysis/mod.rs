//! Exact policy evaluation on tabular MDPs, feature matrices, the projected
//! Bellman fixed point with its error-bound audit, and latent-rank
//! diagnostics.

mod projected;
mod rank;

pub use projected::{
    check_error_bound, gram_schmidt_projection, solve_projected_bellman, AuditRecord, ProjBellmanSolution,
    BOUND_SLACK,
};
pub use rank::{latent_rank, LATENT_RANK_SAMPLES};

use crate::envs::{one_hot, TabularMdp};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::shared_qnet::SharedQNet;

/// Exact action values of a deterministic policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactQ {
    /// Indexed by `s · n_actions + a`.
    pub q: Vec<f64>,
    pub policy: Vec<usize>,
    pub gamma: f64,
}

/// `|S|·|A| × m` features, row `s · n_actions + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub h: Matrix,
    /// `"onehot"`, `"custom"`, or the backbone checksum of the source net.
    pub source: String,
}

pub enum FeatureSource<'a> {
    OneHot,
    Net(&'a SharedQNet),
    Custom(Matrix),
}

fn check_policy(mdp: &TabularMdp, policy: &[usize]) -> Result<()> {
    check_dim("policy length", mdp.n_states, policy.len())?;
    if let Some(s) = policy.iter().position(|&a| a >= mdp.n_actions) {
        return Err(Error::Argument(format!("policy action out of range at state {s}")));
    }
    Ok(())
}

/// Pair index that `(s, a)` routes to under `policy`: `(s', π(s'))`.
pub(crate) fn successor_pairs(mdp: &TabularMdp, policy: &[usize]) -> Vec<usize> {
    (0..mdp.n_states)
        .flat_map(|s| (0..mdp.n_actions).map(move |a| (s, a)))
        .map(|(s, a)| {
            let t = mdp.next_state[s][a];
            mdp.pair_index(t, policy[t])
        })
        .collect()
}

/// Solve `(I − γ P^π) Q = R`.
pub fn exact_q_pi(mdp: &TabularMdp, policy: &[usize]) -> Result<ExactQ> {
    check_policy(mdp, policy)?;
    let n = mdp.n_pairs();
    let next = successor_pairs(mdp, policy);
    let mut a = Matrix::identity(n);
    for (i, &j) in next.iter().enumerate() {
        a.set(i, j, a.get(i, j) - mdp.gamma);
    }
    let r = mdp.reward_vector();
    let q = crate::numerics::solve_linear(&a, &r).map_err(|e| Error::Numeric(format!("exact_q_pi: {e}")))?;
    let residual = (0..n)
        .map(|i| (q[i] - r[i] - mdp.gamma * q[next[i]]).abs())
        .fold(0.0, f64::max);
    if !(residual < 1e-8) {
        return Err(Error::Numeric(format!("exact_q_pi residual {residual:e}")));
    }
    Ok(ExactQ {
        q,
        policy: policy.to_vec(),
        gamma: mdp.gamma,
    })
}

pub fn build_feature_matrix(source: FeatureSource<'_>, mdp: &TabularMdp) -> Result<FeatureMatrix> {
    let n = mdp.n_pairs();
    match source {
        FeatureSource::OneHot => Ok(FeatureMatrix {
            h: Matrix::identity(n),
            source: "onehot".into(),
        }),
        FeatureSource::Custom(h) => {
            check_dim("custom feature rows", n, h.rows())?;
            h.ensure_finite("custom features")?;
            Ok(FeatureMatrix {
                h,
                source: "custom".into(),
            })
        }
        FeatureSource::Net(net) => {
            check_dim("feature net obs_dim", mdp.n_states, net.obs_dim())?;
            check_dim("feature net act_dim", mdp.n_actions, net.act_dim())?;
            let mut input = Matrix::zeros(n, mdp.n_states + mdp.n_actions);
            for s in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    let row = input.row_mut(mdp.pair_index(s, a));
                    row[s] = 1.0;
                    row[mdp.n_states + a] = 1.0;
                }
            }
            Ok(FeatureMatrix {
                h: net.latent_batch(&input)?,
                source: net.phi_checksum(),
            })
        }
    }
}

/// Tabular input encoding used for nets: `[onehot(s) | onehot(a)]`.
pub fn encode_pair(mdp: &TabularMdp, s: usize, a: usize) -> (Vec<f64>, Vec<f64>) {
    (one_hot(s, mdp.n_states), one_hot(a, mdp.n_actions))
}

/// Random deterministic MDP without terminals: uniform successors and
/// standard-normal rewards.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, rng: &mut Rng) -> Result<TabularMdp> {
    let next = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.below(n_states)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.normal()).collect())
        .collect();
    TabularMdp::new(next, reward, gamma, vec![false; n_states], 0)
}

pub fn random_policy(mdp: &TabularMdp, rng: &mut Rng) -> Vec<usize> {
    (0..mdp.n_states).map(|_| rng.below(mdp.n_actions)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::gridworld;

    pub(crate) fn swap_chain(gamma: f64) -> TabularMdp {
        TabularMdp::new(vec![vec![1], vec![0]], vec![vec![1.0], vec![0.0]], gamma, vec![false; 2], 0).unwrap()
    }

    #[test]
    fn two_state_chain() {
        // Q0 = 1 + 0.5 Q1, Q1 = 0.5 Q0  ⇒  Q0 = 1 / (1 − 0.25)
        let q = exact_q_pi(&swap_chain(0.5), &[0, 0]).unwrap().q;
        let q0 = 1.0 / 0.75;
        assert!((q[0] - q0).abs() < 1e-14 && (q[1] - 0.5 * q0).abs() < 1e-14);
        assert!((q[0] - 4.0 / 3.0).abs() < 1e-14 && (q[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_zero_and_zero_rewards() {
        let mut rng = Rng::new(1);
        let mdp = random_mdp(5, 3, 0.0, &mut rng).unwrap();
        let pi = random_policy(&mdp, &mut rng);
        assert_eq!(exact_q_pi(&mdp, &pi).unwrap().q, mdp.reward_vector());
        let mut z = random_mdp(5, 3, 0.9, &mut rng).unwrap();
        z.reward.iter_mut().flatten().for_each(|r| *r = 0.0);
        assert!(exact_q_pi(&z, &pi).unwrap().q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_q_matches_iterated_evaluation() {
        let mut rng = Rng::new(2);
        for _ in 0..10 {
            let mdp = random_mdp(6, 3, 0.8, &mut rng).unwrap();
            let pi = random_policy(&mdp, &mut rng);
            let q = exact_q_pi(&mdp, &pi).unwrap().q;
            let mut it = vec![0.0; mdp.n_pairs()];
            for _ in 0..400 {
                let mut nxt = vec![0.0; it.len()];
                for s in 0..6 {
                    for a in 0..3 {
                        let t = mdp.next_state[s][a];
                        nxt[s * 3 + a] = mdp.reward[s][a] + 0.8 * it[t * 3 + pi[t]];
                    }
                }
                it = nxt;
            }
            assert!(q.iter().zip(&it).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn gridworld_optimal_policy_value() {
        let mdp = gridworld(4, 0.9).unwrap();
        let pi = TabularMdp::greedy_policy(&mdp.optimal_q(1e-13));
        let q = exact_q_pi(&mdp, &pi).unwrap();
        let start = mdp.pair_index(0, pi[0]);
        assert!((q.q[start] - 0.9f64.powi(5)).abs() < 1e-10);
    }

    #[test]
    fn feature_matrices() {
        let mdp = gridworld(2, 0.9).unwrap();
        let f = build_feature_matrix(FeatureSource::OneHot, &mdp).unwrap();
        assert_eq!(f.h, Matrix::identity(16));
        let net = SharedQNet::new(4, 4, &[8, 6], &mut Rng::new(0)).unwrap();
        let a = build_feature_matrix(FeatureSource::Net(&net), &mdp).unwrap();
        let b = build_feature_matrix(FeatureSource::Net(&net), &mdp).unwrap();
        assert_eq!(a.h.shape(), (16, 6));
        assert_eq!(a, b);
        let (o, act) = encode_pair(&mdp, 2, 3);
        assert_eq!(a.h.row(mdp.pair_index(2, 3)), net.latent(&o, &act).unwrap().as_slice());
        let wrong = SharedQNet::new(5, 4, &[4], &mut Rng::new(0)).unwrap();
        assert!(build_feature_matrix(FeatureSource::Net(&wrong), &mdp).is_err());
        assert!(build_feature_matrix(FeatureSource::Custom(Matrix::zeros(3, 2)), &mdp).is_err());
    }

    #[test]
    fn bad_policy_rejected() {
        let mdp = swap_chain(0.5);
        assert!(exact_q_pi(&mdp, &[0]).is_err());
        assert!(exact_q_pi(&mdp, &[0, 1]).is_err());
    }
}
