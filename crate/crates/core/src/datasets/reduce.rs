use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// `⌈fraction · n⌉`, treating products within 1e-9 (relative) of an integer as
/// that integer so that e.g. `0.1 · 20000` is 2000 and not 2001.
pub fn reduced_count(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if n == 0 {
        return Err(Error::Argument("cannot reduce an empty dataset".into()));
    }
    let raw = fraction * n as f64;
    let nearest = raw.round();
    let count = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    Ok((count as usize).clamp(1, n))
}

fn fraction_label(fraction: f64) -> String {
    format!("{fraction}")
}

/// Keep `⌈fraction · N⌉` transitions chosen uniformly without replacement,
/// returned in their original temporal order.
pub fn reduce_uniform(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    let k = reduced_count(d.len(), fraction)?;
    let mut idx = Rng::new(seed).sample_without_replacement(d.len(), k);
    idx.sort_unstable();
    let mut out = d.with_transitions(idx.iter().map(|&i| d.get(i).clone()).collect());
    out.meta.lineage.push(format!(
        "uniform:{}:seed={seed}:n={k}",
        fraction_label(fraction)
    ));
    Ok(out)
}

/// Keep the first `⌈fraction · N⌉` transitions.
pub fn reduce_prefix(d: &Dataset, fraction: f64) -> Result<Dataset> {
    let k = reduced_count(d.len(), fraction)?;
    let mut out = d.with_transitions(d.transitions()[..k].to_vec());
    out.meta.lineage.push(format!("prefix:{}:n={k}", fraction_label(fraction)));
    Ok(out)
}
