//! Transition storage, dataset reductions, observation normalization and the
//! `OQD1` binary format.

mod io;
mod normalize;
mod reduce;

use std::collections::BTreeMap;

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Matrix, Rng};

pub use io::{from_bytes, load, record_len, save, to_bytes, write_csv, HEADER_LEN, MAGIC};
pub use normalize::{Normalizer, STD_FLOOR};
pub use reduce::{reduce_prefix, reduce_uniform, reduced_count};

/// One `(s, a, r, s', done)` tuple. Discrete actions are stored one-hot.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Provenance carried alongside the transitions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetMeta {
    pub env: String,
    pub tier: String,
    pub seed: u64,
    /// Reductions applied since collection, oldest first.
    pub lineage: Vec<String>,
    pub extra: BTreeMap<String, String>,
}

/// An ordered, dimension-consistent list of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    obs_dim: usize,
    act_dim: usize,
    pub meta: DatasetMeta,
}

/// Columnar view of a set of transitions, ready for network consumption.
#[derive(Clone, Debug)]
pub struct Batch {
    pub obs: Matrix,
    pub act: Matrix,
    pub reward: Vec<f64>,
    pub next_obs: Matrix,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    /// `[obs | act]`, the input layout of every state-action network.
    pub fn obs_act(&self) -> Matrix {
        self.obs.hstack(&self.act).expect("batch rows agree")
    }
}

impl Dataset {
    pub fn new(obs_dim: usize, act_dim: usize, meta: DatasetMeta) -> Self {
        Self {
            transitions: Vec::new(),
            obs_dim,
            act_dim,
            meta,
        }
    }

    pub fn from_transitions(
        obs_dim: usize,
        act_dim: usize,
        meta: DatasetMeta,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        let mut d = Self::new(obs_dim, act_dim, meta);
        d.transitions.reserve(transitions.len());
        for t in transitions {
            d.push(t)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        check_dim("Transition obs", self.obs_dim, t.obs.len())?;
        check_dim("Transition next_obs", self.obs_dim, t.next_obs.len())?;
        check_dim("Transition act", self.act_dim, t.act.len())?;
        let finite = t.obs.iter().chain(&t.act).chain(&t.next_obs).all(|v| v.is_finite())
            && t.reward.is_finite();
        if !finite {
            return Err(Error::Numeric(format!(
                "transition {} has non-finite entries",
                self.transitions.len()
            )));
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.transitions[i]
    }

    pub(crate) fn with_transitions(&self, transitions: Vec<Transition>) -> Self {
        Self {
            transitions,
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            meta: self.meta.clone(),
        }
    }

    /// Concatenate datasets with equal dimensions, e.g. two tiers into a
    /// mixed-quality dataset. Tiers are joined with `+`.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("concat of zero datasets".into()))?;
        let mut meta = first.meta.clone();
        meta.tier = parts.iter().map(|d| d.meta.tier.as_str()).collect::<Vec<_>>().join("+");
        let mut out = Dataset::new(first.obs_dim, first.act_dim, meta);
        for d in parts {
            check_dim("Dataset::concat obs_dim", first.obs_dim, d.obs_dim)?;
            check_dim("Dataset::concat act_dim", first.act_dim, d.act_dim)?;
            out.transitions.extend(d.transitions.iter().cloned());
        }
        Ok(out)
    }

    /// Gather the given rows into a [`Batch`].
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let n = indices.len();
        let mut obs = Vec::with_capacity(n * self.obs_dim);
        let mut act = Vec::with_capacity(n * self.act_dim);
        let mut next_obs = Vec::with_capacity(n * self.obs_dim);
        let mut reward = Vec::with_capacity(n);
        let mut done = Vec::with_capacity(n);
        for &i in indices {
            let t = &self.transitions[i];
            obs.extend_from_slice(&t.obs);
            act.extend_from_slice(&t.act);
            next_obs.extend_from_slice(&t.next_obs);
            reward.push(t.reward);
            done.push(if t.done { 1.0 } else { 0.0 });
        }
        Batch {
            obs: Matrix::from_vec(n, self.obs_dim, obs).expect("sized"),
            act: Matrix::from_vec(n, self.act_dim, act).expect("sized"),
            reward,
            next_obs: Matrix::from_vec(n, self.obs_dim, next_obs).expect("sized"),
            done,
        }
    }

    /// Uniform mini-batch drawn with replacement.
    pub fn sample_batch(&self, rng: &mut Rng, size: usize) -> Batch {
        let idx: Vec<usize> = (0..size).map(|_| rng.below(self.len())).collect();
        self.batch(&idx)
    }

    pub fn all(&self) -> Batch {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }
}
