use super::{dynamics_loss, SharedAdam, SharedQNet};
use crate::datasets::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::numerics::Rng;

pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            lr: 3e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainReport {
    pub loss_curve: Vec<f64>,
    pub final_holdout_mse: f64,
    pub pretrained_phi_checksum: String,
}

/// Number of training transitions; the remaining tail is the holdout.
pub fn holdout_split(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "pretraining needs at least 2 transitions, got {n}"
        )));
    }
    let holdout = ((n as f64 * HOLDOUT_FRACTION).ceil() as usize).clamp(1, n - 1);
    Ok(n - holdout)
}

/// Fit backbone and transition head to next-state prediction with Adam.
/// The Q head is never touched.
pub fn pretrain(net: &mut SharedQNet, d: &Dataset, cfg: &PretrainConfig) -> Result<PretrainReport> {
    check_dim("pretrain obs_dim", net.obs_dim(), d.obs_dim())?;
    check_dim("pretrain act_dim", net.act_dim(), d.act_dim())?;
    if net.is_frozen() {
        return Err(Error::Argument("cannot pretrain a frozen backbone".into()));
    }
    if cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(Error::Argument("pretraining needs steps >= 1 and batch_size >= 1".into()));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Argument(format!("invalid learning rate {}", cfg.lr)));
    }
    let n_train = holdout_split(d.len())?;
    let mut rng = Rng::new(cfg.seed);
    let mut adam = SharedAdam::new(net);
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    let mut idx = vec![0; cfg.batch_size];
    for step in 0..cfg.steps {
        idx.iter_mut().for_each(|i| *i = rng.below(n_train));
        let batch = d.batch(&idx);
        let (loss, grads) = dynamics_loss(net, &batch.obs_act(), &batch.next_obs)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite pretraining loss at step {step}")));
        }
        adam.apply(net, &grads, cfg.lr)?;
        loss_curve.push(loss);
    }
    let holdout: Vec<usize> = (n_train..d.len()).collect();
    let batch = d.batch(&holdout);
    let pred = net.predict_next_batch(&batch.obs_act())?;
    let sq: f64 = pred
        .data()
        .iter()
        .zip(batch.next_obs.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let final_holdout_mse = sq / holdout.len() as f64;
    if !final_holdout_mse.is_finite() {
        return Err(Error::Numeric("non-finite holdout error after pretraining".into()));
    }
    Ok(PretrainReport {
        loss_curve,
        final_holdout_mse,
        pretrained_phi_checksum: net.phi_checksum(),
    })
}
