use crate::datasets::Normalizer;
use crate::envs::{run_episodes, Env, Policy, ReferenceReturns};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mean_return: f64,
    /// Population standard deviation over episodes.
    pub std_return: f64,
    pub mean_discounted_return: f64,
    pub normalized_score: Option<f64>,
    pub episodes: usize,
    pub seed: u64,
}

/// `100 · (raw − random) / (expert − random)`.
pub fn normalized_score(raw: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if !(expert_ref > random_ref) {
        return Err(Error::Argument(format!(
            "expert reference {expert_ref} must exceed random reference {random_ref}"
        )));
    }
    Ok(100.0 * (raw - random_ref) / (expert_ref - random_ref))
}

/// Roll out `policy` for `n_episodes` and summarize undiscounted returns.
pub fn evaluate(
    policy: &dyn Policy,
    env: &mut Env,
    n_episodes: usize,
    seed: u64,
    refs: Option<&ReferenceReturns>,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Argument("evaluate needs n_episodes >= 1".into()));
    }
    let stats = run_episodes(env, policy, n_episodes, seed)?;
    let n = stats.len() as f64;
    let mean_return = stats.iter().map(|s| s.ret).sum::<f64>() / n;
    let var = stats.iter().map(|s| (s.ret - mean_return).powi(2)).sum::<f64>() / n;
    let mean_discounted_return = stats.iter().map(|s| s.discounted).sum::<f64>() / n;
    let normalized_score = match refs {
        Some(r) => Some(normalized_score(mean_return, r.random, r.expert)?),
        None => None,
    };
    Ok(EvalReport {
        mean_return,
        std_return: var.sqrt(),
        mean_discounted_return,
        normalized_score,
        episodes: stats.len(),
        seed,
    })
}

/// Feeds normalized observations to a policy trained on normalized data.
pub struct NormalizedPolicy<'a> {
    pub inner: &'a dyn Policy,
    pub normalizer: &'a Normalizer,
}

impl Policy for NormalizedPolicy<'_> {
    fn act(&self, obs: &[f64], rng: &mut Rng) -> Vec<f64> {
        self.inner.act(&self.normalizer.normalize(obs), rng)
    }
}
