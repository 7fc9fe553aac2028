use sha2::{Digest, Sha256};

use super::matrix::{gemm, Matrix};
use super::rng::Rng;
use crate::error::{check_dim, Error, Result};

/// Activation applied elementwise after an affine layer. Hidden layers always
/// use [`Activation::Relu`]; the output layer uses the net's configured tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected network: `layer_dims = [input, hidden..., output]`.
///
/// `weights[i]` has shape `(layer_dims[i+1], layer_dims[i])`, `biases[i]` has
/// length `layer_dims[i+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    output_activation: Activation,
}

/// Per-layer pre- and post-activations recorded by [`MlpNet::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }

    pub fn into_output(mut self) -> Matrix {
        self.post.pop().unwrap_or(self.input)
    }
}

/// Gradients with the same layout as the parameters of an [`MlpNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpNet) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Parameter blocks in declared order: `W0, b0, W1, b1, ...`.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.data_mut(), b.as_mut_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

const OUTPUT_INIT_RANGE: f64 = 3e-3;

impl MlpNet {
    /// Seeded initialization: hidden-style layers draw weights from
    /// `N(0, 2/fan_in)` with zero bias; a non-rectified output layer draws
    /// weights and biases from `U(-3e-3, 3e-3)`.
    pub fn new(layer_dims: &[usize], output_activation: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, output_activation)?;
        let n_layers = net.n_layers();
        for i in 0..n_layers {
            let fan_in = layer_dims[i];
            let is_output = i + 1 == n_layers && output_activation != Activation::Relu;
            if is_output {
                for w in net.weights[i].data_mut() {
                    *w = rng.uniform_range(-OUTPUT_INIT_RANGE, OUTPUT_INIT_RANGE);
                }
                for b in &mut net.biases[i] {
                    *b = rng.uniform_range(-OUTPUT_INIT_RANGE, OUTPUT_INIT_RANGE);
                }
            } else {
                let std = (2.0 / fan_in as f64).sqrt();
                for w in net.weights[i].data_mut() {
                    *w = std * rng.normal();
                }
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], output_activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Argument(format!(
                "layer_dims must have at least two positive entries, got {layer_dims:?}"
            )));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            output_activation,
        })
    }

    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        output_activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("an MlpNet needs at least one layer".into()));
        }
        check_dim("MlpNet::from_parts layer count", weights.len(), biases.len())?;
        let mut layer_dims = vec![weights[0].cols()];
        for (w, b) in weights.iter().zip(&biases) {
            check_dim("MlpNet::from_parts fan-in", *layer_dims.last().unwrap(), w.cols())?;
            check_dim("MlpNet::from_parts bias", w.rows(), b.len())?;
            layer_dims.push(w.rows());
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            output_activation,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardCache> {
        check_dim("MlpNet::forward input width", self.input_dim(), batch.cols())?;
        batch.ensure_finite("MlpNet::forward input")?;
        let n = batch.rows();
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.n_layers());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let x = post.last().unwrap_or(batch);
            let mut z = Matrix::zeros(n, w.rows());
            for r in 0..n {
                z.row_mut(r).copy_from_slice(b);
            }
            gemm(1.0, x, false, w, true, 1.0, &mut z);
            let act = self.activation_of(i);
            let mut a = z.clone();
            if act != Activation::Identity {
                for v in a.data_mut() {
                    *v = act.apply(*v);
                }
            }
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache {
            input: batch.clone(),
            pre,
            post,
        })
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.into_output())
    }

    fn check_cache(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<()> {
        check_dim("MlpNet::backward cache depth", self.n_layers(), cache.pre.len())?;
        for (i, z) in cache.pre.iter().enumerate() {
            check_dim("MlpNet::backward cache width", self.layer_dims[i + 1], z.cols())?;
        }
        check_dim("MlpNet::backward cache input", self.input_dim(), cache.input.cols())?;
        check_dim("MlpNet::backward grad rows", cache.input.rows(), grad_output.rows())?;
        check_dim("MlpNet::backward grad cols", self.output_dim(), grad_output.cols())
    }

    /// Backpropagate `grad_output` (∂loss/∂output) through the cached forward
    /// pass. Returns parameter gradients and ∂loss/∂input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(MlpGrads, Matrix)> {
        self.backprop(cache, grad_output, true)
            .map(|(g, x)| (g.expect("parameter gradients requested"), x))
    }

    /// Like [`MlpNet::backward`] but skips parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<Matrix> {
        self.backprop(cache, grad_output, false).map(|(_, x)| x)
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
        want_params: bool,
    ) -> Result<(Option<MlpGrads>, Matrix)> {
        self.check_cache(cache, grad_output)?;
        let n_layers = self.n_layers();
        let mut grads = want_params.then(|| MlpGrads::zeros_like(self));
        let mut grad_post = grad_output.clone();
        for i in (0..n_layers).rev() {
            let act = self.activation_of(i);
            let mut delta = grad_post;
            if act != Activation::Identity {
                let pre = cache.pre[i].data();
                let post = cache.post[i].data();
                for (k, d) in delta.data_mut().iter_mut().enumerate() {
                    *d *= act.derivative(pre[k], post[k]);
                }
            }
            let x = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            if let Some(g) = grads.as_mut() {
                gemm(1.0, &delta, true, x, false, 0.0, &mut g.weights[i]);
                let gb = &mut g.biases[i];
                for r in 0..delta.rows() {
                    for (acc, v) in gb.iter_mut().zip(delta.row(r)) {
                        *acc += v;
                    }
                }
            }
            let mut grad_in = Matrix::zeros(delta.rows(), self.layer_dims[i]);
            gemm(1.0, &delta, false, &self.weights[i], false, 0.0, &mut grad_in);
            grad_post = grad_in;
        }
        Ok((grads, grad_post))
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|b| b.len()).sum()
    }

    /// Parameter blocks in declared order: `W0, b0, W1, b1, ...`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.data_mut(), b.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Hex SHA-256 over the layer dims and raw parameter bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for &d in &self.layer_dims {
            h.update((d as u64).to_le_bytes());
        }
        h.update([self.output_activation.tag()]);
        for block in self.params() {
            for v in block {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// `self ← (1 - tau) · self + tau · online`, parameterwise.
    pub fn polyak_update(&mut self, online: &MlpNet, tau: f64) -> Result<()> {
        if self.layer_dims != online.layer_dims {
            return Err(Error::Argument("polyak update between differently shaped nets".into()));
        }
        for (t, o) in self.params_mut().into_iter().zip(online.params()) {
            for (tv, ov) in t.iter_mut().zip(o) {
                *tv = (1.0 - tau) * *tv + tau * ov;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(net: &MlpNet, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for i in 0..net.n_layers() {
            let w = &net.weights()[i];
            let b = &net.biases()[i];
            let mut z = vec![0.0; w.rows()];
            for o in 0..w.rows() {
                let mut s = b[o];
                for k in 0..w.cols() {
                    s += w.get(o, k) * a[k];
                }
                z[o] = s;
            }
            let last = i + 1 == net.n_layers();
            a = z
                .into_iter()
                .map(|v| match (last, net.output_activation()) {
                    (false, _) | (true, Activation::Relu) => v.max(0.0),
                    (true, Activation::Tanh) => v.tanh(),
                    (true, Activation::Identity) => v,
                })
                .collect();
        }
        a
    }

    fn random_batch(rng: &mut Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let net = MlpNet::zeros(&[3, 5, 2], Activation::Identity).unwrap();
        let mut rng = Rng::new(1);
        let out = net.predict(&random_batch(&mut rng, 4, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer() {
        let net = MlpNet::from_parts(
            vec![Matrix::from_vec(1, 1, vec![2.0]).unwrap()],
            vec![vec![1.0]],
            Activation::Identity,
        )
        .unwrap();
        let out = net.predict(&Matrix::from_vec(1, 1, vec![3.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn forward_matches_naive_recomputation() {
        let mut rng = Rng::new(11);
        let net = MlpNet::new(&[4, 8, 3], Activation::Identity, &mut rng).unwrap();
        // Perturb the output layer so it is not near zero.
        let mut net = net;
        for w in net.weights_mut()[1].data_mut() {
            *w = rng.normal();
        }
        let x = random_batch(&mut rng, 6, 4);
        let out = net.predict(&x).unwrap();
        for r in 0..6 {
            let expected = naive_forward(&net, x.row(r));
            for (a, b) in out.row(r).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_rejects_bad_width() {
        let net = MlpNet::zeros(&[3, 2], Activation::Identity).unwrap();
        assert!(matches!(
            net.forward(&Matrix::zeros(2, 4)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_grad_output_gives_zero_grads() {
        let mut rng = Rng::new(2);
        let net = MlpNet::new(&[3, 5, 2], Activation::Identity, &mut rng).unwrap();
        let cache = net.forward(&random_batch(&mut rng, 7, 3)).unwrap();
        let (g, gin) = net.backward(&cache, &Matrix::zeros(7, 2)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(gin.max_abs(), 0.0);
    }

    #[test]
    fn linear_layer_weight_grad_closed_form() {
        let mut rng = Rng::new(5);
        let net = MlpNet::new(&[3, 2], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 4, 3);
        let go = random_batch(&mut rng, 4, 2);
        let cache = net.forward(&x).unwrap();
        let (g, _) = net.backward(&cache, &go).unwrap();
        let expected = go.t_matmul(&x).unwrap();
        for (a, b) in g.weights[0].data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(9);
        let a = MlpNet::new(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let b = MlpNet::new(&[3, 6, 2], Activation::Identity, &mut rng).unwrap();
        let cache = a.forward(&random_batch(&mut rng, 2, 3)).unwrap();
        assert!(b.backward(&cache, &Matrix::zeros(2, 2)).is_err());
        assert!(a.backward(&cache, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = Rng::new(4);
        let net = MlpNet::new(&[5, 16, 16, 3], Activation::Tanh, &mut rng).unwrap();
        let x = random_batch(&mut rng, 9, 5);
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn polyak_definition() {
        let mut rng = Rng::new(8);
        let online = MlpNet::new(&[2, 3, 1], Activation::Identity, &mut rng).unwrap();
        let mut target = MlpNet::new(&[2, 3, 1], Activation::Identity, &mut rng).unwrap();
        let old = target.clone();
        target.polyak_update(&online, 0.005).unwrap();
        for ((t, o), n) in old.params().iter().zip(online.params()).zip(target.params()) {
            for k in 0..t.len() {
                assert_eq!(n[k], 0.995 * t[k] + 0.005 * o[k]);
            }
        }
    }

    #[test]
    fn checksum_tracks_parameters() {
        let mut rng = Rng::new(8);
        let mut net = MlpNet::new(&[2, 3, 1], Activation::Identity, &mut rng).unwrap();
        let c0 = net.checksum();
        assert_eq!(c0, net.clone().checksum());
        net.biases_mut()[0][0] += 1e-300;
        assert_ne!(c0, net.checksum());
    }
}
