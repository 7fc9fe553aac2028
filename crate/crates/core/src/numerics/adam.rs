use super::mlp::{MlpGrads, MlpNet};
use crate::error::{check_dim, Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments for a list of parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn with_block_sizes(sizes: &[usize]) -> Self {
        Self {
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        }
    }

    pub fn for_net(net: &MlpNet) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|b| b.len()).collect();
        Self::with_block_sizes(&sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// One Adam update over matching parameter/gradient blocks.
    ///
    /// Gradients are validated before anything is written, so a rejected
    /// update leaves both parameters and moments untouched.
    pub fn step_blocks(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        check_dim("AdamState blocks", self.first_moment.len(), params.len())?;
        check_dim("AdamState grad blocks", params.len(), grads.len())?;
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            check_dim("AdamState block size", self.first_moment[i].len(), p.len())?;
            check_dim("AdamState grad size", p.len(), g.len())?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in parameter block {i}")));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * gk;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }

    /// One Adam update of `net` from `grads`. Errors name the offending layer.
    pub fn step(&mut self, net: &mut MlpNet, grads: &MlpGrads, lr: f64) -> Result<()> {
        let g = grads.blocks();
        let mut p = net.params_mut();
        self.step_blocks(&mut p, &g, lr).map_err(|e| match e {
            Error::Numeric(_) => {
                let layer = g
                    .iter()
                    .position(|b| b.iter().any(|v| !v.is_finite()))
                    .unwrap_or(0)
                    / 2;
                Error::Numeric(format!("non-finite gradient in layer {layer}"))
            }
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Matrix, Rng};

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut p = vec![1.5, -2.0];
        let mut st = AdamState::with_block_sizes(&[2]);
        st.step_blocks(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], 0.1).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(st.first_moment()[0], vec![0.0, 0.0]);
        assert_eq!(st.second_moment()[0], vec![0.0, 0.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.25] {
            let mut p = vec![0.0];
            let mut st = AdamState::with_block_sizes(&[1]);
            st.step_blocks(&mut [p.as_mut_slice()], &[&[g]], 0.01).unwrap();
            let expected = -0.01 * g / (g.abs() + EPSILON);
            assert!((p[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn minimizes_quadratic() {
        // Oracle: the documented update rule written out longhand.
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * x;
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            let mh = m / (1.0 - BETA1.powi(t));
            let vh = v / (1.0 - BETA2.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + EPSILON);
        }
        assert!(x.abs() < 0.1, "oracle ended at {x}");

        let mut p = vec![1.0];
        let mut st = AdamState::with_block_sizes(&[1]);
        for _ in 0..100 {
            let g = [2.0 * p[0]];
            st.step_blocks(&mut [p.as_mut_slice()], &[&g], 0.05).unwrap();
        }
        assert_eq!(p[0], x);
        assert!(p[0].abs() < 0.1);
    }

    #[test]
    fn non_finite_grad_reports_layer() {
        let mut rng = Rng::new(1);
        let mut net = MlpNet::new(&[2, 3, 1], Activation::Identity, &mut rng).unwrap();
        let before = net.clone();
        let mut g = MlpGrads::zeros_like(&net);
        g.weights[1] = Matrix::from_vec(1, 3, vec![0.0, f64::NAN, 0.0]).unwrap();
        let mut st = AdamState::for_net(&net);
        let err = st.step(&mut net, &g, 1e-3).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert_eq!(net, before);
        assert_eq!(st.step_count(), 0);
    }
}
