//! Deterministic toy environments, tiered behavior policies and transition
//! collection.

mod gridworld;
mod pointmass;
mod policy;

pub use gridworld::{gridworld, TabularMdp, DOWN, LEFT, RIGHT, UP};
pub use pointmass::{
    distance_to_goal, expert_action, pointmass_step, PointState, DT, GOAL, GOAL_RADIUS,
    HORIZON as POINTMASS_HORIZON,
};
pub use policy::{one_hot, BehaviorPolicy, Policy, Tier};

pub(crate) use gridworld::argmax;

use crate::datasets::{Dataset, DatasetMeta, Transition};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{derive_seed, Rng};

/// Episode cap for gridworlds; reaching it truncates without terminating.
pub const GRID_HORIZON: usize = 100;
/// Discount reported for point-mass discounted returns.
pub const POINTMASS_GAMMA: f64 = 0.99;
/// Episodes per tier used to measure normalized-score references.
pub const REFERENCE_EPISODES: usize = 100;
const REFERENCE_SEED: u64 = 0x005E_ED0F_5C0E;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[-1, 1]^dim`.
    Continuous(usize),
}

/// Outcome of one environment step. `terminated` marks a true terminal
/// transition; `truncated` marks the horizon cut-off.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Clone, Debug)]
pub struct GridEnv {
    side: usize,
    mdp: TabularMdp,
    state: usize,
    t: usize,
}

#[derive(Clone, Debug)]
pub struct PointMassEnv {
    state: PointState,
    t: usize,
}

/// The environments known to the crate.
#[derive(Clone, Debug)]
pub enum Env {
    Grid(GridEnv),
    PointMass(PointMassEnv),
}

impl Env {
    pub fn gridworld(side: usize, gamma: f64) -> Result<Env> {
        let mdp = gridworld(side, gamma)?;
        Ok(Env::Grid(GridEnv {
            side,
            state: mdp.initial_state,
            mdp,
            t: 0,
        }))
    }

    pub fn pointmass() -> Env {
        Env::PointMass(PointMassEnv {
            state: [0.0; 4],
            t: 0,
        })
    }

    /// `"pointmass"` or `"gridworld-<side>"` (discount 0.9).
    pub fn from_name(name: &str) -> Result<Env> {
        if name == "pointmass" {
            return Ok(Env::pointmass());
        }
        if let Some(side) = name.strip_prefix("gridworld-") {
            let side: usize = side
                .parse()
                .map_err(|_| Error::Argument(format!("bad gridworld size in {name:?}")))?;
            return Env::gridworld(side, 0.9);
        }
        Err(Error::Argument(format!("unknown environment {name:?}")))
    }

    pub fn name(&self) -> String {
        match self {
            Env::Grid(g) => format!("gridworld-{}", g.side),
            Env::PointMass(_) => "pointmass".into(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Grid(g) => g.mdp.n_states,
            Env::PointMass(_) => 4,
        }
    }

    pub fn act_dim(&self) -> usize {
        match self {
            Env::Grid(g) => g.mdp.n_actions,
            Env::PointMass(_) => 2,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Env::Grid(g) => ActionSpace::Discrete(g.mdp.n_actions),
            Env::PointMass(_) => ActionSpace::Continuous(2),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::Grid(_) => GRID_HORIZON,
            Env::PointMass(_) => POINTMASS_HORIZON,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Env::Grid(g) => g.mdp.gamma,
            Env::PointMass(_) => POINTMASS_GAMMA,
        }
    }

    pub fn mdp(&self) -> Option<&TabularMdp> {
        match self {
            Env::Grid(g) => Some(&g.mdp),
            Env::PointMass(_) => None,
        }
    }

    /// Start a new episode. Gridworlds start at their fixed initial state; the
    /// point mass starts at rest at a uniformly drawn position.
    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Env::Grid(g) => {
                g.state = g.mdp.initial_state;
                g.t = 0;
                one_hot(g.state, g.mdp.n_states)
            }
            Env::PointMass(p) => {
                let x = rng.uniform_range(-1.0, 1.0);
                let y = rng.uniform_range(-1.0, 1.0);
                p.state = [x, y, 0.0, 0.0];
                p.t = 0;
                p.state.to_vec()
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        let horizon = self.horizon();
        match self {
            Env::Grid(g) => {
                check_dim("gridworld action", g.mdp.n_actions, action.len())?;
                let a = argmax(action);
                let s = g.state;
                g.state = g.mdp.next_state[s][a];
                g.t += 1;
                let terminated = g.mdp.terminal[g.state];
                Ok(Step {
                    obs: one_hot(g.state, g.mdp.n_states),
                    reward: g.mdp.reward[s][a],
                    terminated,
                    truncated: !terminated && g.t >= horizon,
                })
            }
            Env::PointMass(p) => {
                check_dim("point-mass action", 2, action.len())?;
                let (next, reward, terminated) = pointmass_step(&p.state, &[action[0], action[1]])?;
                p.state = next;
                p.t += 1;
                Ok(Step {
                    obs: next.to_vec(),
                    reward,
                    terminated,
                    truncated: !terminated && p.t >= horizon,
                })
            }
        }
    }

    /// Stateless dynamics: `(next_obs, reward, terminated)` for an arbitrary
    /// observation-action pair.
    pub fn simulate(&self, obs: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        check_dim("simulate obs", self.obs_dim(), obs.len())?;
        check_dim("simulate action", self.act_dim(), action.len())?;
        match self {
            Env::Grid(g) => {
                let s = argmax(obs);
                let a = argmax(action);
                let t = g.mdp.next_state[s][a];
                Ok((one_hot(t, g.mdp.n_states), g.mdp.reward[s][a], g.mdp.terminal[t]))
            }
            Env::PointMass(_) => {
                let (next, r, done) =
                    pointmass_step(&[obs[0], obs[1], obs[2], obs[3]], &[action[0], action[1]])?;
                Ok((next.to_vec(), r, done))
            }
        }
    }

    pub fn behavior_policy(&self, tier: Tier) -> BehaviorPolicy {
        match self {
            Env::Grid(g) => BehaviorPolicy::tabular(&g.mdp, tier),
            Env::PointMass(_) => BehaviorPolicy::pointmass(tier),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeStats {
    /// Undiscounted sum of rewards.
    pub ret: f64,
    pub discounted: f64,
    pub length: usize,
    pub terminated: bool,
}

/// Roll out `n` episodes of `policy`. Start states and policy randomness use
/// separate streams derived from `seed`, so two policies rolled out with the
/// same seed face the same sequence of start states.
pub fn run_episodes(env: &mut Env, policy: &dyn Policy, n: usize, seed: u64) -> Result<Vec<EpisodeStats>> {
    let mut reset_rng = Rng::new(derive_seed(seed, 0));
    let mut rng = Rng::new(derive_seed(seed, 1));
    let gamma = env.gamma();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut obs = env.reset(&mut reset_rng);
        let mut stats = EpisodeStats {
            ret: 0.0,
            discounted: 0.0,
            length: 0,
            terminated: false,
        };
        let mut discount = 1.0;
        loop {
            let a = policy.act(&obs, &mut rng);
            let step = env.step(&a)?;
            stats.ret += step.reward;
            stats.discounted += discount * step.reward;
            discount *= gamma;
            stats.length += 1;
            if step.done() {
                stats.terminated = step.terminated;
                break;
            }
            obs = step.obs;
        }
        out.push(stats);
    }
    Ok(out)
}

/// Gather exactly `n` transitions with episodic rollouts of `policy`.
///
/// The stored `done` flag marks true terminals only; horizon truncation
/// restarts the episode without marking the last transition terminal.
pub fn collect_dataset(env: &mut Env, policy: &BehaviorPolicy, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("collect_dataset needs n >= 1".into()));
    }
    let meta = DatasetMeta {
        env: env.name(),
        tier: policy.tier.to_string(),
        seed,
        ..Default::default()
    };
    let mut d = Dataset::new(env.obs_dim(), env.act_dim(), meta);
    let mut rng = Rng::new(seed);
    let mut obs = env.reset(&mut rng);
    while d.len() < n {
        let act = policy.act(&obs, &mut rng);
        let step = env.step(&act)?;
        let episode_over = step.done();
        d.push(Transition {
            obs: std::mem::take(&mut obs),
            act,
            reward: step.reward,
            next_obs: step.obs.clone(),
            done: step.terminated,
        })?;
        obs = if episode_over { env.reset(&mut rng) } else { step.obs };
    }
    Ok(d)
}

/// Mean undiscounted returns of the random and expert behavior tiers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceReturns {
    pub random: f64,
    pub expert: f64,
}

/// Score references for `env`, measured by [`REFERENCE_EPISODES`] rollouts
/// of the random and expert tiers from a fixed seed.
pub fn reference_returns(env: &Env) -> Result<ReferenceReturns> {
    let mut env = env.clone();
    let mut mean = |tier: Tier| -> Result<f64> {
        let policy = env.behavior_policy(tier);
        let eps = run_episodes(&mut env, &policy, REFERENCE_EPISODES, REFERENCE_SEED)?;
        Ok(eps.iter().map(|e| e.ret).sum::<f64>() / eps.len() as f64)
    };
    Ok(ReferenceReturns {
        random: mean(Tier::Random)?,
        expert: mean(Tier::Expert)?,
    })
}
