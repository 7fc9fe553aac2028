use super::SharedQNet;
use crate::error::{check_dim, Result};
use crate::numerics::{ForwardCache, Matrix, MlpGrads};

/// Gradients for the parts of a [`SharedQNet`]; `None` marks a part the loss
/// does not touch.
#[derive(Clone, Debug, Default)]
pub struct SharedGrads {
    pub backbone: Option<MlpGrads>,
    pub transition_head: Option<MlpGrads>,
    pub q_head: Option<MlpGrads>,
}

fn merge(a: &mut Option<MlpGrads>, b: &Option<MlpGrads>) {
    match (a.as_mut(), b) {
        (Some(x), Some(y)) => x.add_assign(y),
        (None, Some(y)) => *a = Some(y.clone()),
        _ => {}
    }
}

impl SharedGrads {
    pub fn add_assign(&mut self, other: &SharedGrads) {
        merge(&mut self.backbone, &other.backbone);
        merge(&mut self.transition_head, &other.transition_head);
        merge(&mut self.q_head, &other.q_head);
    }
}

/// Cached forward pass through backbone and Q head.
#[derive(Clone, Debug)]
pub struct QForward {
    backbone: ForwardCache,
    head: ForwardCache,
}

impl QForward {
    pub fn q(&self) -> &[f64] {
        self.head.output().data()
    }

    pub fn latent(&self) -> &Matrix {
        self.backbone.output()
    }
}

impl SharedQNet {
    pub fn q_forward(&self, input: &Matrix) -> Result<QForward> {
        let backbone = self.backbone.forward(input)?;
        let head = self.q_head.forward(backbone.output())?;
        Ok(QForward { backbone, head })
    }

    /// Parameter gradients given `∂loss/∂Q` per row. The backbone is skipped
    /// when frozen.
    pub fn q_backward(&self, fwd: &QForward, grad_q: &[f64]) -> Result<SharedGrads> {
        let g = Matrix::column_vector(grad_q);
        let (head, grad_z) = self.q_head.backward(&fwd.head, &g)?;
        let backbone = if self.frozen_backbone {
            None
        } else {
            Some(self.backbone.backward(&fwd.backbone, &grad_z)?.0)
        };
        Ok(SharedGrads {
            backbone,
            transition_head: None,
            q_head: Some(head),
        })
    }

    /// `∂loss/∂[obs | act]` given `∂loss/∂Q`; no parameter gradients.
    pub fn q_input_gradient(&self, fwd: &QForward, grad_q: &[f64]) -> Result<Matrix> {
        let g = Matrix::column_vector(grad_q);
        let grad_z = self.q_head.input_gradient(&fwd.head, &g)?;
        self.backbone.input_gradient(&fwd.backbone, &grad_z)
    }
}

/// Mean squared next-state error `mean_i ‖s'_i − ŝ'_i‖²` and its gradients
/// for backbone and transition head.
pub fn dynamics_loss(net: &SharedQNet, input: &Matrix, next_obs: &Matrix) -> Result<(f64, SharedGrads)> {
    let fwd = net.backbone.forward(input)?;
    let (loss, grad_z, head) = dynamics_head(net, fwd.output(), next_obs)?;
    let backbone = backbone_grads(net, &fwd, &grad_z)?;
    Ok((
        loss,
        SharedGrads {
            backbone,
            transition_head: Some(head),
            q_head: None,
        },
    ))
}

/// Mean squared TD error `mean_i (Q_i − y_i)²` against fixed targets, with
/// gradients for backbone and Q head.
pub fn td_loss(net: &SharedQNet, input: &Matrix, targets: &[f64]) -> Result<(f64, SharedGrads)> {
    let fwd = net.backbone.forward(input)?;
    let (loss, grad_z, head) = td_head(net, fwd.output(), targets)?;
    let backbone = backbone_grads(net, &fwd, &grad_z)?;
    Ok((
        loss,
        SharedGrads {
            backbone,
            transition_head: None,
            q_head: Some(head),
        },
    ))
}

/// `L_TD + L_dyn` with one shared backbone pass. Returns `(td, dynamics)`
/// loss values and the gradient of their sum.
pub fn joint_loss(
    net: &SharedQNet,
    input: &Matrix,
    next_obs: &Matrix,
    targets: &[f64],
) -> Result<((f64, f64), SharedGrads)> {
    let fwd = net.backbone.forward(input)?;
    let (td, mut grad_z, q_head) = td_head(net, fwd.output(), targets)?;
    let (dynamics, grad_z_dyn, transition_head) = dynamics_head(net, fwd.output(), next_obs)?;
    for (a, b) in grad_z.data_mut().iter_mut().zip(grad_z_dyn.data()) {
        *a += b;
    }
    let backbone = backbone_grads(net, &fwd, &grad_z)?;
    Ok((
        (td, dynamics),
        SharedGrads {
            backbone,
            transition_head: Some(transition_head),
            q_head: Some(q_head),
        },
    ))
}

fn backbone_grads(net: &SharedQNet, fwd: &ForwardCache, grad_z: &Matrix) -> Result<Option<MlpGrads>> {
    if net.frozen_backbone {
        return Ok(None);
    }
    Ok(Some(net.backbone.backward(fwd, grad_z)?.0))
}

fn dynamics_head(net: &SharedQNet, z: &Matrix, next_obs: &Matrix) -> Result<(f64, Matrix, MlpGrads)> {
    check_dim("dynamics loss rows", z.rows(), next_obs.rows())?;
    check_dim("dynamics loss width", net.obs_dim, next_obs.cols())?;
    let cache = net.transition_head.forward(z)?;
    let n = z.rows() as f64;
    let mut grad = cache.output().clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(next_obs.data()) {
        let e = *g - t;
        loss += e * e;
        *g = 2.0 * e / n;
    }
    let (head, grad_z) = net.transition_head.backward(&cache, &grad)?;
    Ok((loss / n, grad_z, head))
}

fn td_head(net: &SharedQNet, z: &Matrix, targets: &[f64]) -> Result<(f64, Matrix, MlpGrads)> {
    check_dim("td loss rows", z.rows(), targets.len())?;
    let cache = net.q_head.forward(z)?;
    let n = z.rows() as f64;
    let mut grad = cache.output().clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(targets) {
        let e = *g - t;
        loss += e * e;
        *g = 2.0 * e / n;
    }
    let (head, grad_z) = net.q_head.backward(&cache, &grad)?;
    Ok((loss / n, grad_z, head))
}
