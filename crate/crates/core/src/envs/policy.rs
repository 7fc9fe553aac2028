use std::fmt;
use std::str::FromStr;

use super::gridworld::{argmax, TabularMdp};
use super::pointmass::expert_action;
use crate::error::Error;
use crate::numerics::Rng;

/// Data-quality tier of a behavior policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Random,
    Medium,
    Expert,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Random, Tier::Medium, Tier::Expert];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Random => "random",
            Tier::Medium => "medium",
            Tier::Expert => "expert",
        }
    }

    /// Gaussian action noise around the scripted controller (continuous envs).
    pub fn noise_std(self) -> f64 {
        match self {
            Tier::Random => f64::INFINITY,
            Tier::Medium => 0.3,
            Tier::Expert => 0.05,
        }
    }

    /// Exploration rate over the oracle Q table (tabular envs).
    pub fn epsilon(self) -> f64 {
        match self {
            Tier::Random => 1.0,
            Tier::Medium => 0.5,
            Tier::Expert => 0.05,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Tier::Random),
            "medium" => Ok(Tier::Medium),
            "expert" => Ok(Tier::Expert),
            _ => Err(Error::Argument(format!("unknown tier {s:?}"))),
        }
    }
}

/// Anything that maps an observation to an action vector.
pub trait Policy {
    fn act(&self, obs: &[f64], rng: &mut Rng) -> Vec<f64>;
}

#[derive(Clone, Debug)]
enum Kind {
    PointMass,
    Tabular { greedy: Vec<usize>, n_actions: usize },
}

/// Scripted data-collection policy for one tier of one environment.
#[derive(Clone, Debug)]
pub struct BehaviorPolicy {
    pub tier: Tier,
    kind: Kind,
}

impl BehaviorPolicy {
    pub fn pointmass(tier: Tier) -> Self {
        Self {
            tier,
            kind: Kind::PointMass,
        }
    }

    /// ε-greedy over the value-iteration optimum of `mdp`.
    pub fn tabular(mdp: &TabularMdp, tier: Tier) -> Self {
        let q = mdp.optimal_q(1e-12);
        Self {
            tier,
            kind: Kind::Tabular {
                greedy: TabularMdp::greedy_policy(&q),
                n_actions: mdp.n_actions,
            },
        }
    }

    pub fn noise_std(&self) -> f64 {
        self.tier.noise_std()
    }

    pub fn epsilon(&self) -> f64 {
        self.tier.epsilon()
    }
}

impl Policy for BehaviorPolicy {
    fn act(&self, obs: &[f64], rng: &mut Rng) -> Vec<f64> {
        match &self.kind {
            Kind::PointMass => {
                if self.tier == Tier::Random {
                    return vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
                }
                let s = [obs[0], obs[1], obs[2], obs[3]];
                let std = self.noise_std();
                expert_action(&s)
                    .iter()
                    .map(|a| (a + std * rng.normal()).clamp(-1.0, 1.0))
                    .collect()
            }
            Kind::Tabular { greedy, n_actions } => {
                let a = if rng.uniform() < self.epsilon() {
                    rng.below(*n_actions)
                } else {
                    greedy[argmax(obs)]
                };
                one_hot(a, *n_actions)
            }
        }
    }
}

pub fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
