use super::{is_log_step, CurvePoint, Meter, Observer};
use crate::datasets::Dataset;
use crate::envs::Policy;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{derive_seed, Activation, AdamState, Matrix, MlpNet, Rng};
use crate::shared_qnet::{dynamics_loss, SharedAdam, SharedQNet, DEFAULT_HIDDEN};

/// Any critic output beyond this magnitude aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct Td3BcConfig {
    pub steps: usize,
    pub seed: u64,
    /// Train only the critics' Q heads (and the actor).
    pub freeze: bool,
    /// Add the next-state prediction loss to each critic's TD loss.
    pub joint: bool,
    pub alpha: f64,
    pub tau: f64,
    pub policy_delay: usize,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub log_every: usize,
}

impl Default for Td3BcConfig {
    fn default() -> Self {
        Self {
            steps: 30_000,
            seed: 0,
            freeze: false,
            joint: false,
            alpha: 2.5,
            tau: 0.005,
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            gamma: 0.99,
            lr: 3e-4,
            batch_size: 256,
            hidden: DEFAULT_HIDDEN.to_vec(),
            actor_hidden: DEFAULT_HIDDEN.to_vec(),
            log_every: 1000,
        }
    }
}

impl Td3BcConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("td3bc: {m}")));
        if self.batch_size == 0 || self.policy_delay == 0 {
            return bad("batch_size and policy_delay must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..1.0).contains(&self.gamma) {
            return bad("tau must lie in [0, 1] and gamma in [0, 1)");
        }
        if !(self.lr > 0.0) || !(self.alpha > 0.0) || self.target_noise < 0.0 || self.noise_clip < 0.0 {
            return bad("lr and alpha must be positive, noise scales non-negative");
        }
        if self.hidden.is_empty() {
            return bad("critic hidden dims must be non-empty");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Td3BcAgent {
    pub actor: MlpNet,
    pub critic1: SharedQNet,
    pub critic2: SharedQNet,
    pub actor_target: MlpNet,
    pub critic1_target: SharedQNet,
    pub critic2_target: SharedQNet,
    pub config: Td3BcConfig,
    last_lambda: Option<(f64, f64)>,
}

impl Td3BcAgent {
    /// Fresh actor; critics from `init` when given, otherwise freshly built
    /// with `config.hidden`.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        init: Option<(SharedQNet, SharedQNet)>,
        config: Td3BcConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (mut c1, mut c2) = match init {
            Some((a, b)) => {
                for c in [&a, &b] {
                    check_dim("td3bc critic obs_dim", obs_dim, c.obs_dim())?;
                    check_dim("td3bc critic act_dim", act_dim, c.act_dim())?;
                }
                if a.hidden_dims() != b.hidden_dims() {
                    return Err(Error::Argument("twin critics must share an architecture".into()));
                }
                (a, b)
            }
            None => (
                SharedQNet::new(obs_dim, act_dim, &config.hidden, rng)?,
                SharedQNet::new(obs_dim, act_dim, &config.hidden, rng)?,
            ),
        };
        if config.freeze {
            c1 = c1.freeze_backbone();
            c2 = c2.freeze_backbone();
        }
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(&config.actor_hidden);
        dims.push(act_dim);
        let actor = MlpNet::new(&dims, Activation::Tanh, rng)?;
        Ok(Self {
            actor_target: actor.clone(),
            critic1_target: c1.clone(),
            critic2_target: c2.clone(),
            actor,
            critic1: c1,
            critic2: c2,
            config,
            last_lambda: None,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        check_dim("td3bc actor input", self.obs_dim(), obs.len())?;
        Ok(self.actor.predict(&Matrix::row_vector(obs))?.into_vec())
    }

    /// `(λ, mean|Q₁|)` from the most recent actor update.
    pub fn last_lambda(&self) -> Option<(f64, f64)> {
        self.last_lambda
    }
}

impl Policy for Td3BcAgent {
    fn act(&self, obs: &[f64], _rng: &mut Rng) -> Vec<f64> {
        self.act_deterministic(obs).expect("observation matches actor input")
    }
}

/// Two critics sharing one pretrained backbone and transition head, each with
/// its own freshly seeded Q head.
pub fn twin_critics(pretrained: &SharedQNet, seed: u64) -> Result<(SharedQNet, SharedQNet)> {
    let mut a = pretrained.clone();
    let mut b = pretrained.clone();
    a.reinit_q_head(&mut Rng::new(derive_seed(seed, 1)))?;
    b.reinit_q_head(&mut Rng::new(derive_seed(seed, 2)))?;
    Ok((a, b))
}

fn check_divergence(q: &[f64], step: usize) -> Result<()> {
    let magnitude = q.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    if !(magnitude <= DIVERGENCE_LIMIT) {
        return Err(Error::Divergence { step, magnitude });
    }
    Ok(())
}

pub fn td3bc_train(
    d: &Dataset,
    init: Option<(SharedQNet, SharedQNet)>,
    config: &Td3BcConfig,
) -> Result<(Td3BcAgent, Vec<CurvePoint>)> {
    td3bc_train_observed(d, init, config, &mut |_, _| Ok(()))
}

/// TD3+BC on a (normalized) dataset. The observer sees the agent at every
/// logged step and may fill the measurement columns of the curve row.
pub fn td3bc_train_observed(
    d: &Dataset,
    init: Option<(SharedQNet, SharedQNet)>,
    config: &Td3BcConfig,
    observer: &mut Observer<'_, Td3BcAgent>,
) -> Result<(Td3BcAgent, Vec<CurvePoint>)> {
    if d.is_empty() {
        return Err(Error::Argument("td3bc needs a non-empty dataset".into()));
    }
    let mut init_rng = Rng::new(derive_seed(config.seed, 0));
    let mut agent = Td3BcAgent::new(d.obs_dim(), d.act_dim(), init, config.clone(), &mut init_rng)?;
    let mut rng = Rng::new(derive_seed(config.seed, 1));
    let mut actor_adam = AdamState::for_net(&agent.actor);
    let mut adam1 = SharedAdam::new(&agent.critic1);
    let mut adam2 = SharedAdam::new(&agent.critic2);
    let (obs_dim, act_dim) = (d.obs_dim(), d.act_dim());
    let mut curve = Vec::new();
    let (mut critic_meter, mut actor_meter) = (Meter::default(), Meter::default());

    let mut log = |agent: &Td3BcAgent, step: usize, cm: &mut Meter, am: &mut Meter| -> Result<()> {
        let mut point = CurvePoint {
            step,
            loss_critic: cm.take(),
            loss_actor: am.take(),
            ..Default::default()
        };
        observer(agent, &mut point)?;
        curve.push(point);
        Ok(())
    };
    log(&agent, 0, &mut critic_meter, &mut actor_meter)?;

    for step in 0..config.steps {
        let b = d.sample_batch(&mut rng, config.batch_size);
        let n = b.len();
        let input = b.obs_act();

        let mut next_act = agent.actor_target.predict(&b.next_obs)?;
        for v in next_act.data_mut() {
            let noise = (config.target_noise * rng.normal()).clamp(-config.noise_clip, config.noise_clip);
            *v = (*v + noise).clamp(-1.0, 1.0);
        }
        let next_input = b.next_obs.hstack(&next_act)?;
        let q1t = agent.critic1_target.q_batch(&next_input)?;
        let q2t = agent.critic2_target.q_batch(&next_input)?;
        check_divergence(&q1t, step)?;
        check_divergence(&q2t, step)?;
        let y: Vec<f64> = (0..n)
            .map(|i| b.reward[i] + config.gamma * (1.0 - b.done[i]) * q1t[i].min(q2t[i]))
            .collect();

        let mut critic_loss = 0.0;
        for (critic, adam) in [(&mut agent.critic1, &mut adam1), (&mut agent.critic2, &mut adam2)] {
            let fwd = critic.q_forward(&input)?;
            check_divergence(fwd.q(), step)?;
            let mut grad = vec![0.0; n];
            for i in 0..n {
                let e = fwd.q()[i] - y[i];
                critic_loss += e * e / n as f64;
                grad[i] = 2.0 * e / n as f64;
            }
            let mut grads = critic.q_backward(&fwd, &grad)?;
            if config.joint && !critic.is_frozen() {
                let (dyn_loss, g) = dynamics_loss(critic, &input, &b.next_obs)?;
                critic_loss += dyn_loss;
                grads.add_assign(&g);
            }
            adam.apply(critic, &grads, config.lr)?;
        }
        if !critic_loss.is_finite() {
            return Err(Error::Divergence { step, magnitude: critic_loss });
        }
        critic_meter.add(critic_loss);

        if (step + 1) % config.policy_delay == 0 {
            let pi = agent.actor.forward(&b.obs)?;
            let pi_input = b.obs.hstack(pi.output())?;
            let fwd = agent.critic1.q_forward(&pi_input)?;
            let q = fwd.q();
            check_divergence(q, step)?;
            let mean_abs = q.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
            let lambda = config.alpha / mean_abs.max(f64::MIN_POSITIVE);
            let grad_q = vec![-lambda / n as f64; n];
            let grad_in = agent.critic1.q_input_gradient(&fwd, &grad_q)?;
            let mut grad_pi = grad_in.columns(obs_dim, obs_dim + act_dim);
            let mut bc = 0.0;
            for (g, (p, a)) in grad_pi
                .data_mut()
                .iter_mut()
                .zip(pi.output().data().iter().zip(b.act.data()))
            {
                bc += (p - a) * (p - a);
                *g += 2.0 * (p - a) / n as f64;
            }
            let actor_loss = -lambda * q.iter().sum::<f64>() / n as f64 + bc / n as f64;
            let (g_actor, _) = agent.actor.backward(&pi, &grad_pi)?;
            actor_adam.step(&mut agent.actor, &g_actor, config.lr)?;
            agent.last_lambda = Some((lambda, mean_abs));
            actor_meter.add(actor_loss);

            agent.critic1_target.polyak_update(&agent.critic1, config.tau)?;
            agent.critic2_target.polyak_update(&agent.critic2, config.tau)?;
            agent.actor_target.polyak_update(&agent.actor, config.tau)?;
        }

        let done = step + 1;
        if done > 0 && is_log_step(done, config.steps, config.log_every) {
            log(&agent, done, &mut critic_meter, &mut actor_meter)?;
        }
    }
    Ok((agent, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_support::random_dataset;

    fn small() -> Td3BcConfig {
        Td3BcConfig {
            steps: 20,
            batch_size: 16,
            hidden: vec![8, 8],
            actor_hidden: vec![8, 8],
            log_every: 10,
            ..Default::default()
        }
    }

    fn bounded(n: usize, seed: u64) -> Dataset {
        let mut d = random_dataset(n, 3, 2, seed);
        let ts: Vec<_> = d
            .transitions()
            .iter()
            .cloned()
            .map(|mut t| {
                t.act.iter_mut().for_each(|a| *a = a.tanh());
                t
            })
            .collect();
        d = d.with_transitions(ts);
        d
    }

    #[test]
    fn zero_steps_keeps_initialization() {
        let d = bounded(50, 1);
        let net = SharedQNet::new(3, 2, &[8, 8], &mut Rng::new(4)).unwrap();
        let pair = twin_critics(&net, 7).unwrap();
        let cfg = Td3BcConfig { steps: 0, ..small() };
        let (agent, curve) = td3bc_train(&d, Some(pair.clone()), &cfg).unwrap();
        assert_eq!(agent.critic1, pair.0);
        assert_eq!(agent.critic2, pair.1);
        assert_eq!(agent.critic1.phi_checksum(), net.phi_checksum());
        assert_eq!(agent.critic2.phi_checksum(), net.phi_checksum());
        assert_ne!(agent.critic1.theta_checksum(), agent.critic2.theta_checksum());
        assert_eq!(agent.actor, agent.actor_target);
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].step, 0);
    }

    #[test]
    fn delayed_polyak_matches_definition() {
        let d = bounded(40, 2);
        let cfg1 = Td3BcConfig { steps: 1, ..small() };
        let cfg2 = Td3BcConfig { steps: 2, ..small() };
        let (one, _) = td3bc_train(&d, None, &cfg1).unwrap();
        let (two, _) = td3bc_train(&d, None, &cfg2).unwrap();
        let (zero, _) = td3bc_train(&d, None, &Td3BcConfig { steps: 0, ..small() }).unwrap();
        assert_eq!(one.critic1_target, zero.critic1_target);
        let pairs = [
            (&zero.critic1_target.backbone().params(), &two.critic1.backbone().params(), &two.critic1_target.backbone().params()),
            (&zero.critic2_target.q_head().params(), &two.critic2.q_head().params(), &two.critic2_target.q_head().params()),
            (&zero.actor_target.params(), &two.actor.params(), &two.actor_target.params()),
        ];
        for (old, online, target) in pairs {
            for ((o, on), t) in old.iter().zip(online.iter()).zip(target.iter()) {
                for ((a, b), c) in o.iter().zip(on.iter()).zip(t.iter()) {
                    assert_eq!(*c, 0.995 * a + 0.005 * b);
                }
            }
        }
    }

    #[test]
    fn lambda_normalizes_q_scale() {
        let d = bounded(60, 3);
        let (agent, _) = td3bc_train(&d, None, &Td3BcConfig { steps: 6, ..small() }).unwrap();
        let (lambda, mean_abs) = agent.last_lambda().unwrap();
        assert!((lambda * mean_abs - 2.5).abs() <= 4.0 * f64::EPSILON * 2.5);
    }

    #[test]
    fn frozen_training_keeps_phi_and_psi() {
        let d = bounded(80, 4);
        let net = SharedQNet::new(3, 2, &[8, 8], &mut Rng::new(1)).unwrap();
        let pair = twin_critics(&net, 0).unwrap();
        let cfg = Td3BcConfig { steps: 100, freeze: true, ..small() };
        let (agent, _) = td3bc_train(&d, Some(pair.clone()), &cfg).unwrap();
        for c in [&agent.critic1, &agent.critic2, &agent.critic1_target, &agent.critic2_target] {
            assert_eq!(c.phi_checksum(), net.phi_checksum());
            assert_eq!(c.psi_checksum(), net.psi_checksum());
        }
        assert_ne!(agent.critic1.theta_checksum(), pair.0.theta_checksum());
        let cfg = Td3BcConfig { freeze: false, ..cfg };
        let (control, _) = td3bc_train(&d, Some(pair), &cfg).unwrap();
        assert_ne!(control.critic1.phi_checksum(), net.phi_checksum());
    }

    #[test]
    fn joint_mode_moves_transition_head() {
        let d = bounded(80, 5);
        let net = SharedQNet::new(3, 2, &[8, 8], &mut Rng::new(1)).unwrap();
        let pair = twin_critics(&net, 0).unwrap();
        let plain = td3bc_train(&d, Some(pair.clone()), &Td3BcConfig { steps: 10, ..small() }).unwrap().0;
        assert_eq!(plain.critic1.psi_checksum(), net.psi_checksum());
        let joint = td3bc_train(&d, Some(pair), &Td3BcConfig { steps: 10, joint: true, ..small() }).unwrap().0;
        assert_ne!(joint.critic1.psi_checksum(), net.psi_checksum());
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let d = bounded(60, 6);
        let cfg = Td3BcConfig { steps: 25, ..small() };
        let (a, ca) = td3bc_train(&d, None, &cfg).unwrap();
        let (b, cb) = td3bc_train(&d, None, &cfg).unwrap();
        assert_eq!(a.actor, b.actor);
        assert_eq!(ca, cb);
        let steps: Vec<usize> = ca.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        assert!(ca[1].loss_critic.is_some() && ca[1].loss_actor.is_some());
    }

    #[test]
    fn twin_target_is_below_both() {
        let d = bounded(30, 7);
        let (agent, _) = td3bc_train(&d, None, &Td3BcConfig { steps: 4, ..small() }).unwrap();
        let b = d.all();
        let next = b.next_obs.hstack(&agent.actor_target.predict(&b.next_obs).unwrap()).unwrap();
        let q1 = agent.critic1_target.q_batch(&next).unwrap();
        let q2 = agent.critic2_target.q_batch(&next).unwrap();
        for i in 0..b.len() {
            let y = |q: f64| b.reward[i] + 0.99 * (1.0 - b.done[i]) * q;
            let twin = y(q1[i].min(q2[i]));
            assert!(twin <= y(q1[i]) && twin <= y(q2[i]));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let d = bounded(30, 8);
        let mut net = SharedQNet::new(3, 2, &[4], &mut Rng::new(0)).unwrap();
        net.q_head_mut().biases_mut()[0][0] = 1e7;
        let cfg = Td3BcConfig { steps: 5, ..small() };
        match td3bc_train(&d, Some((net.clone(), net)), &cfg) {
            Err(Error::Divergence { step: 0, magnitude }) => assert!(magnitude > 1e6),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
