use super::{Dataset, Transition};
use crate::error::{check_dim, Error, Result};

pub const STD_FLOOR: f64 = 1e-3;

/// Per-dimension observation standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Population mean/std over every `obs` and `next_obs` jointly, with the
    /// std floored at [`STD_FLOOR`].
    pub fn fit(d: &Dataset) -> Result<Self> {
        if d.len() < 2 {
            return Err(Error::Argument(format!(
                "normalizer needs at least 2 transitions, got {}",
                d.len()
            )));
        }
        let dim = d.obs_dim();
        let count = 2.0 * d.len() as f64;
        let mut mean = vec![0.0; dim];
        for t in d.transitions() {
            for k in 0..dim {
                mean[k] += t.obs[k] + t.next_obs[k];
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let mut var = vec![0.0; dim];
        for t in d.transitions() {
            for k in 0..dim {
                let a = t.obs[k] - mean[k];
                let b = t.next_obs[k] - mean[k];
                var[k] += a * a + b * b;
            }
        }
        let std = var.iter().map(|v| (v / count).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }

    /// Normalize `obs` and `next_obs` of every transition.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        check_dim("Normalizer::apply", self.dim(), d.obs_dim())?;
        let ts = d
            .transitions()
            .iter()
            .map(|t| Transition {
                obs: self.normalize(&t.obs),
                act: t.act.clone(),
                reward: t.reward,
                next_obs: self.normalize(&t.next_obs),
                done: t.done,
            })
            .collect();
        Ok(d.with_transitions(ts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_support::random_dataset;
    use crate::datasets::DatasetMeta;

    fn one_dim(values: &[(f64, f64)]) -> Dataset {
        let ts = values
            .iter()
            .map(|&(o, n)| Transition {
                obs: vec![o],
                act: vec![0.0],
                reward: 0.0,
                next_obs: vec![n],
                done: false,
            })
            .collect();
        Dataset::from_transitions(1, 1, DatasetMeta::default(), ts).unwrap()
    }

    #[test]
    fn constant_dataset_floors_std() {
        let d = one_dim(&[(2.0, 2.0), (2.0, 2.0), (2.0, 2.0)]);
        let n = Normalizer::fit(&d).unwrap();
        assert_eq!(n.std, vec![STD_FLOOR]);
        let a = n.apply(&d).unwrap();
        assert!(a.transitions().iter().all(|t| t.obs[0] == 0.0 && t.next_obs[0] == 0.0));
    }

    #[test]
    fn plus_minus_one() {
        let n = Normalizer::fit(&one_dim(&[(-1.0, 1.0), (1.0, -1.0)])).unwrap();
        assert_eq!(n.mean, vec![0.0]);
        assert_eq!(n.std, vec![1.0]);
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            Normalizer::fit(&one_dim(&[(1.0, 2.0)])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn normalized_moments() {
        let d = random_dataset(500, 4, 2, 8);
        let a = Normalizer::fit(&d).unwrap().apply(&d).unwrap();
        let count = 2.0 * a.len() as f64;
        for k in 0..4 {
            let vals: Vec<f64> = a
                .transitions()
                .iter()
                .flat_map(|t| [t.obs[k], t.next_obs[k]])
                .collect();
            let mean = vals.iter().sum::<f64>() / count;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
            assert!(mean.abs() < 1e-10, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-10, "std {std}");
        }
    }

    #[test]
    fn roundtrip_within_tolerance() {
        let d = random_dataset(20, 3, 1, 2);
        let n = Normalizer::fit(&d).unwrap();
        for t in d.transitions() {
            let back = n.denormalize(&n.normalize(&t.obs));
            for (a, b) in back.iter().zip(&t.obs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
