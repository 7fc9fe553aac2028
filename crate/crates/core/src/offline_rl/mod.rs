//! Offline RL trainers over [`SharedQNet`](crate::shared_qnet::SharedQNet)
//! critics: TD3+BC for continuous actions, a conservative Q-learner for
//! discrete actions, plus rollout evaluation and normalized scoring.

mod cql;
mod eval;
mod td3bc;

pub use cql::{cql_discrete_train, cql_discrete_train_observed, logsumexp, CqlConfig, DiscreteCqlAgent};
pub use eval::{evaluate, normalized_score, EvalReport, NormalizedPolicy};
pub use td3bc::{td3bc_train, td3bc_train_observed, twin_critics, Td3BcAgent, Td3BcConfig, DIVERGENCE_LIMIT};

/// One learning-curve row. Loss columns are interval means; the measurement
/// columns are filled by an observer when it measures.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub loss_critic: Option<f64>,
    pub loss_actor: Option<f64>,
    pub eval_return: Option<f64>,
    pub normalized_score: Option<f64>,
    pub latent_rank: Option<usize>,
}

/// Called at step 0, every `log_every` completed steps and after the last step.
pub type Observer<'a, A> = dyn FnMut(&A, &mut CurvePoint) -> crate::Result<()> + 'a;

#[derive(Default)]
pub(crate) struct Meter {
    sum: f64,
    count: usize,
}

impl Meter {
    pub(crate) fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub(crate) fn take(&mut self) -> Option<f64> {
        let out = (self.count > 0).then(|| self.sum / self.count as f64);
        *self = Meter::default();
        out
    }
}

pub(crate) fn is_log_step(step: usize, total: usize, every: usize) -> bool {
    step == 0 || step == total || (every > 0 && step.is_multiple_of(every))
}
