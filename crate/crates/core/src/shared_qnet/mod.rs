//! The shared Q-network: a rectified backbone `h` whose latent feeds an affine
//! transition head `g` (next-state prediction) and an affine Q head `f`.
//!
//! `ŝ' = g(h(s, a))` and `Q(s, a) = f(h(s, a)) = ⟨θ, h(s, a)⟩ + b`.

mod checkpoint;
mod losses;
mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use losses::{dynamics_loss, joint_loss, td_loss, QForward, SharedGrads};
pub use pretrain::{holdout_split, pretrain, PretrainConfig, PretrainReport, HOLDOUT_FRACTION};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Activation, AdamState, Matrix, MlpNet, Rng};

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

#[derive(Clone, Debug, PartialEq)]
pub struct SharedQNet {
    backbone: MlpNet,
    transition_head: MlpNet,
    q_head: MlpNet,
    frozen_backbone: bool,
    obs_dim: usize,
    act_dim: usize,
}

impl SharedQNet {
    /// Backbone `[obs_dim + act_dim, hidden...]` with a rectified output; the
    /// latent dimension is `hidden.last()`.
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Argument("the backbone needs at least one hidden layer".into()));
        }
        let mut dims = vec![obs_dim + act_dim];
        dims.extend_from_slice(hidden);
        let m = *hidden.last().unwrap();
        let backbone = MlpNet::new(&dims, Activation::Relu, rng)?;
        let transition_head = MlpNet::new(&[m, obs_dim], Activation::Identity, rng)?;
        let q_head = MlpNet::new(&[m, 1], Activation::Identity, rng)?;
        Self::from_parts(obs_dim, act_dim, backbone, transition_head, q_head)
    }

    pub fn from_parts(
        obs_dim: usize,
        act_dim: usize,
        backbone: MlpNet,
        transition_head: MlpNet,
        q_head: MlpNet,
    ) -> Result<Self> {
        check_dim("SharedQNet backbone input", obs_dim + act_dim, backbone.input_dim())?;
        if backbone.output_activation() != Activation::Relu {
            return Err(Error::Argument("the backbone output must be rectified".into()));
        }
        let m = backbone.output_dim();
        check_dim("SharedQNet transition head input", m, transition_head.input_dim())?;
        check_dim("SharedQNet transition head output", obs_dim, transition_head.output_dim())?;
        check_dim("SharedQNet q head input", m, q_head.input_dim())?;
        check_dim("SharedQNet q head output", 1, q_head.output_dim())?;
        if transition_head.n_layers() != 1 || q_head.n_layers() != 1 {
            return Err(Error::Argument("heads must be single affine layers".into()));
        }
        if transition_head.output_activation() != Activation::Identity
            || q_head.output_activation() != Activation::Identity
        {
            return Err(Error::Argument("heads must be affine".into()));
        }
        Ok(Self {
            backbone,
            transition_head,
            q_head,
            frozen_backbone: false,
            obs_dim,
            act_dim,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.backbone.layer_dims()[1..]
    }

    pub fn backbone(&self) -> &MlpNet {
        &self.backbone
    }

    pub fn transition_head(&self) -> &MlpNet {
        &self.transition_head
    }

    pub fn q_head(&self) -> &MlpNet {
        &self.q_head
    }

    /// Mutable backbone access; refused while the backbone is frozen.
    pub fn backbone_mut(&mut self) -> Result<&mut MlpNet> {
        if self.frozen_backbone {
            return Err(Error::Argument("backbone is frozen".into()));
        }
        Ok(&mut self.backbone)
    }

    pub fn transition_head_mut(&mut self) -> &mut MlpNet {
        &mut self.transition_head
    }

    pub fn q_head_mut(&mut self) -> &mut MlpNet {
        &mut self.q_head
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_backbone
    }

    /// Fix φ and ψ; later updates may only touch the Q head.
    pub fn freeze_backbone(mut self) -> Self {
        self.frozen_backbone = true;
        self
    }

    pub(crate) fn set_frozen(&mut self, frozen: bool) {
        self.frozen_backbone = frozen;
    }

    /// Fresh seeded Q head, keeping the backbone and transition head.
    pub fn reinit_q_head(&mut self, rng: &mut Rng) -> Result<()> {
        self.q_head = MlpNet::new(&[self.latent_dim(), 1], Activation::Identity, rng)?;
        Ok(())
    }

    pub fn phi_checksum(&self) -> String {
        self.backbone.checksum()
    }

    pub fn psi_checksum(&self) -> String {
        self.transition_head.checksum()
    }

    pub fn theta_checksum(&self) -> String {
        self.q_head.checksum()
    }

    fn single_input(&self, obs: &[f64], act: &[f64]) -> Result<Matrix> {
        check_dim("SharedQNet obs", self.obs_dim, obs.len())?;
        check_dim("SharedQNet act", self.act_dim, act.len())?;
        let mut v = obs.to_vec();
        v.extend_from_slice(act);
        Ok(Matrix::row_vector(&v))
    }

    /// Backbone features `z = h(s, a)`.
    pub fn latent(&self, obs: &[f64], act: &[f64]) -> Result<Vec<f64>> {
        Ok(self.latent_batch(&self.single_input(obs, act)?)?.into_vec())
    }

    pub fn predict_next_state(&self, obs: &[f64], act: &[f64]) -> Result<Vec<f64>> {
        let z = self.latent_batch(&self.single_input(obs, act)?)?;
        Ok(self.transition_head.predict(&z)?.into_vec())
    }

    pub fn q_value(&self, obs: &[f64], act: &[f64]) -> Result<f64> {
        let z = self.latent_batch(&self.single_input(obs, act)?)?;
        Ok(self.q_head.predict(&z)?.data()[0])
    }

    /// Latents for a batch of `[obs | act]` rows.
    pub fn latent_batch(&self, input: &Matrix) -> Result<Matrix> {
        self.backbone.predict(input)
    }

    pub fn q_batch(&self, input: &Matrix) -> Result<Vec<f64>> {
        Ok(self.q_head.predict(&self.latent_batch(input)?)?.into_vec())
    }

    pub fn predict_next_batch(&self, input: &Matrix) -> Result<Matrix> {
        self.transition_head.predict(&self.latent_batch(input)?)
    }

    /// `(1 - tau) · self + tau · online` over all three parts. A frozen net
    /// only moves its Q head.
    pub fn polyak_update(&mut self, online: &SharedQNet, tau: f64) -> Result<()> {
        if !self.frozen_backbone {
            self.backbone.polyak_update(&online.backbone, tau)?;
            self.transition_head.polyak_update(&online.transition_head, tau)?;
        }
        self.q_head.polyak_update(&online.q_head, tau)
    }
}

/// Adam state for every part of a [`SharedQNet`].
#[derive(Clone, Debug)]
pub struct SharedAdam {
    backbone: AdamState,
    transition_head: AdamState,
    q_head: AdamState,
}

impl SharedAdam {
    pub fn new(net: &SharedQNet) -> Self {
        Self {
            backbone: AdamState::for_net(&net.backbone),
            transition_head: AdamState::for_net(&net.transition_head),
            q_head: AdamState::for_net(&net.q_head),
        }
    }

    /// Apply whichever gradients are present. A frozen net only updates its
    /// Q head.
    pub fn apply(&mut self, net: &mut SharedQNet, grads: &SharedGrads, lr: f64) -> Result<()> {
        if !net.frozen_backbone {
            if let Some(g) = &grads.backbone {
                self.backbone.step(&mut net.backbone, g, lr)?;
            }
            if let Some(g) = &grads.transition_head {
                self.transition_head.step(&mut net.transition_head, g, lr)?;
            }
        }
        if let Some(g) = &grads.q_head {
            self.q_head.step(&mut net.q_head, g, lr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(seed: u64) -> SharedQNet {
        SharedQNet::new(3, 2, &[8, 6], &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn zero_transition_head_predicts_zero() {
        let mut n = net(1);
        *n.transition_head_mut() = MlpNet::zeros(&[6, 3], Activation::Identity).unwrap();
        assert_eq!(n.predict_next_state(&[1.0, 2.0, 3.0], &[0.5, -0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_routing_predicts_obs() {
        // Backbone routes obs into the positive and negative halves of the
        // latent; the head recombines them: relu(x) - relu(-x) = x.
        let (obs_dim, act_dim) = (3, 2);
        let mut w = Matrix::zeros(2 * obs_dim, obs_dim + act_dim);
        let mut h = Matrix::zeros(obs_dim, 2 * obs_dim);
        for k in 0..obs_dim {
            w.set(k, k, 1.0);
            w.set(obs_dim + k, k, -1.0);
            h.set(k, k, 1.0);
            h.set(k, obs_dim + k, -1.0);
        }
        let backbone =
            MlpNet::from_parts(vec![w], vec![vec![0.0; 2 * obs_dim]], Activation::Relu).unwrap();
        let head = MlpNet::from_parts(vec![h], vec![vec![0.0; obs_dim]], Activation::Identity).unwrap();
        let q = MlpNet::zeros(&[2 * obs_dim, 1], Activation::Identity).unwrap();
        let n = SharedQNet::from_parts(obs_dim, act_dim, backbone, head, q).unwrap();
        let obs = [0.3, -1.7, 2.0];
        assert_eq!(n.predict_next_state(&obs, &[0.1, 0.9]).unwrap(), obs.to_vec());
    }

    #[test]
    fn zero_q_head_gives_zero() {
        let mut n = net(2);
        *n.q_head_mut() = MlpNet::zeros(&[6, 1], Activation::Identity).unwrap();
        assert_eq!(n.q_value(&[1.0, 0.0, -1.0], &[0.2, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn q_is_affine_in_latent() {
        let mut rng = Rng::new(3);
        for seed in 0..10 {
            let n = net(seed);
            let obs: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let act = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
            let z = n.latent(&obs, &act).unwrap();
            let theta = n.q_head().weights()[0].data();
            let bias = n.q_head().biases()[0][0];
            let manual: f64 = z.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + bias;
            assert!((n.q_value(&obs, &act).unwrap() - manual).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_theta_scales_q() {
        let mut n = net(4);
        let (obs, act) = ([0.1, 0.2, 0.3], [0.4, -0.5]);
        let bias = n.q_head().biases()[0][0];
        let q1 = n.q_value(&obs, &act).unwrap() - bias;
        for w in n.q_head_mut().weights_mut()[0].data_mut() {
            *w *= 3.0;
        }
        let q3 = n.q_value(&obs, &act).unwrap() - bias;
        assert!((q3 - 3.0 * q1).abs() < 1e-12);
    }

    #[test]
    fn latent_properties() {
        let n = net(5);
        let (obs, act) = ([1.0, -1.0, 0.5], [0.0, 1.0]);
        assert_eq!(n.latent(&obs, &act).unwrap(), n.latent(&obs, &act).unwrap());
        let d = SharedQNet::new(4, 2, &DEFAULT_HIDDEN, &mut Rng::new(0)).unwrap();
        assert_eq!(d.latent(&[0.0; 4], &[0.0; 2]).unwrap().len(), 256);
        assert!(matches!(n.latent(&obs, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_backbone_latent_is_constant() {
        let mut n = net(6);
        let bb = n.backbone_mut().unwrap();
        for w in bb.weights_mut() {
            w.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        bb.biases_mut()[0] = vec![0.5, -0.2, 0.1, 0.0, 0.3, 1.0, -1.0, 0.2];
        let z1 = n.latent(&[1.0, 2.0, 3.0], &[0.1, 0.1]).unwrap();
        let z2 = n.latent(&[-4.0, 0.0, 9.0], &[-1.0, 1.0]).unwrap();
        assert_eq!(z1, z2);
        assert!(z1.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn heads_share_latent() {
        let n = net(7);
        let (obs, act) = ([0.3, 0.1, -0.2], [0.7, 0.0]);
        let z = Matrix::row_vector(&n.latent(&obs, &act).unwrap());
        assert_eq!(
            n.transition_head().predict(&z).unwrap().into_vec(),
            n.predict_next_state(&obs, &act).unwrap()
        );
        assert_eq!(n.q_head().predict(&z).unwrap().data()[0], n.q_value(&obs, &act).unwrap());
    }

    #[test]
    fn frozen_q_is_linear_in_theta() {
        let mut n = net(8).freeze_backbone();
        assert!(n.backbone_mut().is_err());
        let (obs, act) = ([0.2, -0.4, 0.9], [0.5, 0.5]);
        let mut rng = Rng::new(1);
        let t1: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let t2: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let mut q_with = |t: &[f64]| {
            let head = n.q_head_mut();
            head.weights_mut()[0].data_mut().copy_from_slice(t);
            head.biases_mut()[0][0] = 0.0;
            n.q_value(&obs, &act).unwrap()
        };
        let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
        let (a, b, c) = (q_with(&t1), q_with(&t2), q_with(&sum));
        assert!((c - a - b).abs() < 1e-12);
    }
}
