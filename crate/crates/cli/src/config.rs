//! Flat `key=value` run configuration. Lists are comma-separated; `#` starts
//! a comment line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use oqseed_core::envs::Tier;

use crate::HarnessError;

/// The fraction grid used by the default sweep.
pub const FRACTION_GRID: [f64; 5] = [0.01, 0.03, 0.1, 0.3, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PretrainMode {
    On,
    Off,
    Frozen,
    Joint,
}

impl PretrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PretrainMode::On => "on",
            PretrainMode::Off => "off",
            PretrainMode::Frozen => "frozen",
            PretrainMode::Joint => "joint",
        }
    }

    /// Whether a separate pretraining phase precedes RL.
    pub fn pretrains(self) -> bool {
        matches!(self, PretrainMode::On | PretrainMode::Frozen)
    }
}

impl FromStr for PretrainMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(PretrainMode::On),
            "off" => Ok(PretrainMode::Off),
            "frozen" => Ok(PretrainMode::Frozen),
            "joint" => Ok(PretrainMode::Joint),
            _ => Err(HarnessError::Config(format!("unknown pretrain mode {s:?}"))),
        }
    }
}

impl fmt::Display for PretrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Uniform,
    Prefix,
}

impl Reduction {
    pub fn as_str(self) -> &'static str {
        match self {
            Reduction::Uniform => "uniform",
            Reduction::Prefix => "prefix",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Td3Bc,
    CqlDiscrete,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Td3Bc => "td3bc",
            Algorithm::CqlDiscrete => "cql_discrete",
        }
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "td3bc" => Ok(Algorithm::Td3Bc),
            "cql_discrete" => Ok(Algorithm::CqlDiscrete),
            _ => Err(HarnessError::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// How RL steps are budgeted against pretraining steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepBudget {
    /// Every mode gets `rl_steps` RL steps.
    MatchedRl,
    /// Modes without a pretraining phase get `pretrain_steps` extra RL steps.
    MatchedTotal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub tiers: Vec<Tier>,
    pub dataset: PathBuf,
    pub fractions: Vec<f64>,
    pub reduction: Reduction,
    pub pretrain_modes: Vec<PretrainMode>,
    pub algorithm: Algorithm,
    pub pretrain_steps: usize,
    pub rl_steps: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub normalize: bool,
    pub independent_pretrain: bool,
    pub step_budget: StepBudget,
    pub cql_weight: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub rank_every: usize,
    pub pretrain_log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "pointmass".into(),
            tiers: vec![Tier::Medium],
            dataset: PathBuf::from("data.oqd"),
            fractions: FRACTION_GRID.to_vec(),
            reduction: Reduction::Uniform,
            pretrain_modes: vec![PretrainMode::On, PretrainMode::Off],
            algorithm: Algorithm::Td3Bc,
            pretrain_steps: 20_000,
            rl_steps: 30_000,
            seeds: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("runs"),
            hidden: vec![256, 256],
            batch_size: 256,
            lr: 3e-4,
            normalize: true,
            independent_pretrain: false,
            step_budget: StepBudget::MatchedRl,
            cql_weight: 1.0,
            eval_every: 1000,
            eval_episodes: 10,
            rank_every: 5000,
            pretrain_log_every: 1000,
        }
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| HarnessError::Config(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

fn one<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Config(format!("{key}: cannot parse {v:?}")))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parse config text on top of the defaults. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut c = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key=value", no + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        match key {
            "env" => self.env = v.to_string(),
            "tiers" | "tier" => {
                self.tiers = list::<String>(key, v)?
                    .iter()
                    .map(|s| s.parse().map_err(|_| HarnessError::Config(format!("unknown tier {s:?}"))))
                    .collect::<Result<_, _>>()?
            }
            "dataset" => self.dataset = PathBuf::from(v),
            "fractions" | "fraction" => self.fractions = list(key, v)?,
            "reduction" => {
                self.reduction = match v {
                    "uniform" => Reduction::Uniform,
                    "prefix" => Reduction::Prefix,
                    _ => return Err(HarnessError::Config(format!("unknown reduction {v:?}"))),
                }
            }
            "pretrain_modes" | "pretrain" => self.pretrain_modes = list(key, v)?,
            "algorithm" => self.algorithm = v.parse()?,
            "pretrain_steps" => self.pretrain_steps = one(key, v)?,
            "rl_steps" => self.rl_steps = one(key, v)?,
            "seeds" => self.seeds = list(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "hidden" => self.hidden = list(key, v)?,
            "batch_size" => self.batch_size = one(key, v)?,
            "lr" => self.lr = one(key, v)?,
            "normalize" => self.normalize = one(key, v)?,
            "independent_pretrain" => self.independent_pretrain = one(key, v)?,
            "step_budget" => {
                self.step_budget = match v {
                    "matched_rl" => StepBudget::MatchedRl,
                    "matched_total" => StepBudget::MatchedTotal,
                    _ => return Err(HarnessError::Config(format!("unknown step_budget {v:?}"))),
                }
            }
            "cql_weight" => self.cql_weight = one(key, v)?,
            "eval_every" => self.eval_every = one(key, v)?,
            "eval_episodes" => self.eval_episodes = one(key, v)?,
            "rank_every" => self.rank_every = one(key, v)?,
            "pretrain_log_every" => self.pretrain_log_every = one(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("fractions must be non-empty and lie in (0, 1]".into());
        }
        if self.pretrain_modes.is_empty() || self.tiers.is_empty() {
            return bad("pretrain_modes and tiers must be non-empty".into());
        }
        if self.algorithm == Algorithm::CqlDiscrete
            && self.pretrain_modes.contains(&PretrainMode::Joint)
        {
            return bad("joint mode is only defined for td3bc".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden dims must be non-empty and positive".into());
        }
        if [self.batch_size, self.eval_episodes, self.rl_steps, self.eval_every, self.rank_every].contains(&0) {
            return bad("batch_size, eval_episodes, eval_every, rank_every and rl_steps must be >= 1".into());
        }
        if self.pretrain_modes.iter().any(|m| m.pretrains()) && self.pretrain_steps == 0 {
            return bad("pretraining modes need pretrain_steps >= 1".into());
        }
        if !(self.lr > 0.0) || self.cql_weight < 0.0 {
            return bad("lr must be positive and cql_weight non-negative".into());
        }
        Ok(())
    }

    /// Canonical text; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let tiers: Vec<&str> = self.tiers.iter().map(|t| t.as_str()).collect();
        let modes: Vec<&str> = self.pretrain_modes.iter().map(|m| m.as_str()).collect();
        let lines = [
            ("env", self.env.clone()),
            ("tiers", tiers.join(",")),
            ("dataset", self.dataset.display().to_string()),
            ("fractions", join(&self.fractions)),
            ("reduction", self.reduction.as_str().into()),
            ("pretrain_modes", modes.join(",")),
            ("algorithm", self.algorithm.as_str().into()),
            ("pretrain_steps", self.pretrain_steps.to_string()),
            ("rl_steps", self.rl_steps.to_string()),
            ("seeds", join(&self.seeds)),
            ("out", self.out.display().to_string()),
            ("hidden", join(&self.hidden)),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("normalize", self.normalize.to_string()),
            ("independent_pretrain", self.independent_pretrain.to_string()),
            (
                "step_budget",
                match self.step_budget {
                    StepBudget::MatchedRl => "matched_rl",
                    StepBudget::MatchedTotal => "matched_total",
                }
                .into(),
            ),
            ("cql_weight", self.cql_weight.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("rank_every", self.rank_every.to_string()),
            ("pretrain_log_every", self.pretrain_log_every.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Tier label as recorded in dataset metadata.
    pub fn tier_label(&self) -> String {
        self.tiers.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("+")
    }

    /// RL steps for a mode under the configured budget.
    pub fn rl_steps_for(&self, mode: PretrainMode) -> usize {
        match (self.step_budget, mode.pretrains()) {
            (StepBudget::MatchedTotal, false) => self.rl_steps + self.pretrain_steps,
            _ => self.rl_steps,
        }
    }

    /// Pretraining steps actually run by a mode.
    pub fn pretrain_steps_for(&self, mode: PretrainMode) -> usize {
        if mode.pretrains() {
            self.pretrain_steps
        } else {
            0
        }
    }
}
