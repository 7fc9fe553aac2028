use super::{is_log_step, CurvePoint, Meter, Observer};
use crate::datasets::Dataset;
use crate::envs::{argmax, one_hot, Policy};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::shared_qnet::{SharedAdam, SharedQNet, DEFAULT_HIDDEN};

use super::td3bc::DIVERGENCE_LIMIT;

#[derive(Clone, Debug, PartialEq)]
pub struct CqlConfig {
    pub steps: usize,
    pub seed: u64,
    pub cql_weight: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Hard target copy period in steps.
    pub target_update: usize,
    pub hidden: Vec<usize>,
    pub log_every: usize,
}

impl Default for CqlConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            seed: 0,
            cql_weight: 1.0,
            gamma: 0.99,
            lr: 3e-4,
            batch_size: 256,
            target_update: 200,
            hidden: DEFAULT_HIDDEN.to_vec(),
            log_every: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteCqlAgent {
    pub qnet: SharedQNet,
    pub target: SharedQNet,
    pub config: CqlConfig,
}

/// `[obs_i | onehot(a)]` for every row `i` and action `a`, row `i·A + a`.
fn expand(obs: &Matrix, n_actions: usize) -> Matrix {
    let (n, d) = obs.shape();
    let mut out = Matrix::zeros(n * n_actions, d + n_actions);
    for i in 0..n {
        for a in 0..n_actions {
            let row = out.row_mut(i * n_actions + a);
            row[..d].copy_from_slice(obs.row(i));
            row[d + a] = 1.0;
        }
    }
    out
}

/// Numerically stable `log Σ exp(v)`.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl DiscreteCqlAgent {
    pub fn n_actions(&self) -> usize {
        self.qnet.act_dim()
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        check_dim("cql obs", self.qnet.obs_dim(), obs.len())?;
        self.qnet.q_batch(&expand(&Matrix::row_vector(obs), self.n_actions()))
    }

    /// Lowest-index argmax of Q over the action set.
    pub fn greedy_action(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }
}

impl Policy for DiscreteCqlAgent {
    fn act(&self, obs: &[f64], _rng: &mut Rng) -> Vec<f64> {
        let a = self.greedy_action(obs).expect("observation matches network input");
        one_hot(a, self.n_actions())
    }
}

fn data_actions(d: &Dataset) -> Result<Vec<usize>> {
    d.transitions()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let ones = t.act.iter().filter(|&&v| v == 1.0).count();
            let zeros = t.act.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != t.act.len() {
                return Err(Error::Argument(format!("transition {i} action is not one-hot")));
            }
            Ok(argmax(&t.act))
        })
        .collect()
}

pub fn cql_discrete_train(
    d: &Dataset,
    init: Option<SharedQNet>,
    config: &CqlConfig,
) -> Result<(DiscreteCqlAgent, Vec<CurvePoint>)> {
    cql_discrete_train_observed(d, init, config, &mut |_, _| Ok(()))
}

/// Conservative Q-learning over one-hot actions: squared TD error to the hard
/// target's greedy backup plus `cql_weight · (logsumexp_a Q − Q(s, a_data))`.
pub fn cql_discrete_train_observed(
    d: &Dataset,
    init: Option<SharedQNet>,
    config: &CqlConfig,
    observer: &mut Observer<'_, DiscreteCqlAgent>,
) -> Result<(DiscreteCqlAgent, Vec<CurvePoint>)> {
    if d.is_empty() || config.batch_size == 0 || config.target_update == 0 {
        return Err(Error::Argument(
            "cql needs a non-empty dataset, batch_size >= 1 and target_update >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.gamma) || !(config.lr > 0.0) || config.cql_weight < 0.0 {
        return Err(Error::Argument("cql: invalid gamma, lr or cql_weight".into()));
    }
    let actions = data_actions(d)?;
    let n_actions = d.act_dim();
    let qnet = match init {
        Some(net) => {
            check_dim("cql init obs_dim", d.obs_dim(), net.obs_dim())?;
            check_dim("cql init act_dim", n_actions, net.act_dim())?;
            net
        }
        None => SharedQNet::new(
            d.obs_dim(),
            n_actions,
            &config.hidden,
            &mut Rng::new(derive_seed(config.seed, 0)),
        )?,
    };
    let mut agent = DiscreteCqlAgent {
        target: qnet.clone(),
        qnet,
        config: config.clone(),
    };
    let mut rng = Rng::new(derive_seed(config.seed, 1));
    let mut adam = SharedAdam::new(&agent.qnet);
    let mut curve = Vec::new();
    let mut meter = Meter::default();
    let mut log = |agent: &DiscreteCqlAgent, step: usize, meter: &mut Meter| -> Result<()> {
        let mut point = CurvePoint {
            step,
            loss_critic: meter.take(),
            ..Default::default()
        };
        observer(agent, &mut point)?;
        curve.push(point);
        Ok(())
    };
    log(&agent, 0, &mut meter)?;

    let mut idx = vec![0; config.batch_size];
    for step in 0..config.steps {
        idx.iter_mut().for_each(|i| *i = rng.below(d.len()));
        let b = d.batch(&idx);
        let n = b.len();
        let q_next = agent.target.q_batch(&expand(&b.next_obs, n_actions))?;
        let fwd = agent.qnet.q_forward(&expand(&b.obs, n_actions))?;
        let q = fwd.q();
        let magnitude = q.iter().chain(&q_next).fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= DIVERGENCE_LIMIT) || q.iter().chain(&q_next).any(|v| v.is_nan()) {
            return Err(Error::Divergence { step, magnitude });
        }
        let nf = n as f64;
        let mut grad = vec![0.0; n * n_actions];
        let mut loss = 0.0;
        for i in 0..n {
            let next = &q_next[i * n_actions..(i + 1) * n_actions];
            let max_next = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let y = b.reward[i] + config.gamma * (1.0 - b.done[i]) * max_next;
            let row = &q[i * n_actions..(i + 1) * n_actions];
            let a = actions[idx[i]];
            let e = row[a] - y;
            let lse = logsumexp(row);
            loss += (e * e + config.cql_weight * (lse - row[a])) / nf;
            let g = &mut grad[i * n_actions..(i + 1) * n_actions];
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = config.cql_weight * (row[k] - lse).exp() / nf;
            }
            g[a] += (2.0 * e - config.cql_weight) / nf;
        }
        let grads = agent.qnet.q_backward(&fwd, &grad)?;
        adam.apply(&mut agent.qnet, &grads, config.lr)?;
        meter.add(loss);
        if (step + 1) % config.target_update == 0 {
            agent.target = agent.qnet.clone();
        }
        let done = step + 1;
        if is_log_step(done, config.steps, config.log_every) {
            log(&agent, done, &mut meter)?;
        }
    }
    Ok((agent, curve))
}
