use crate::datasets::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{svd_rank, Rng};
use crate::shared_qnet::SharedQNet;

pub const LATENT_RANK_SAMPLES: usize = 512;

/// Numerical rank of the latents of `n_samples` transitions drawn without
/// replacement.
pub fn latent_rank(net: &SharedQNet, d: &Dataset, n_samples: usize, rel_tol: f64, seed: u64) -> Result<usize> {
    check_dim("latent_rank obs_dim", net.obs_dim(), d.obs_dim())?;
    check_dim("latent_rank act_dim", net.act_dim(), d.act_dim())?;
    if n_samples == 0 || d.len() < n_samples {
        return Err(Error::Argument(format!(
            "latent_rank needs 1 <= n_samples <= dataset size, got {n_samples} of {}",
            d.len()
        )));
    }
    let idx = Rng::new(seed).sample_without_replacement(d.len(), n_samples);
    let z = net.latent_batch(&d.batch(&idx).obs_act())?;
    svd_rank(&z, rel_tol)
}
