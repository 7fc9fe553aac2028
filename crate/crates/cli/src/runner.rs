//! A single sweep cell: reduce, optionally pretrain, train, evaluate.

use std::fs;
use std::path::Path;
use std::time::Instant;

use oqseed_core::analysis::{latent_rank, LATENT_RANK_SAMPLES};
use oqseed_core::datasets::{reduce_prefix, reduce_uniform, Dataset, Normalizer};
use oqseed_core::envs::{Env, Policy, ReferenceReturns};
use oqseed_core::numerics::{derive_seed, Rng, RANK_TOL_DIAGNOSTIC};
use oqseed_core::offline_rl::{
    cql_discrete_train_observed, evaluate, td3bc_train_observed, twin_critics, CqlConfig, CurvePoint,
    NormalizedPolicy, Td3BcConfig,
};
use oqseed_core::shared_qnet::{pretrain, save_checkpoint, PretrainConfig, SharedQNet};

use crate::config::{Algorithm, PretrainMode, Reduction, RunConfig};
use crate::{fmt_opt, HarnessError, Result};

pub(crate) const SALT_INIT: u64 = 10;
const SALT_INIT_B: u64 = 11;
pub(crate) const SALT_PRETRAIN: u64 = 12;
const SALT_PRETRAIN_B: u64 = 13;
const SALT_TWIN: u64 = 14;
const SALT_RL: u64 = 20;
const SALT_EVAL: u64 = 30;
const SALT_RANK: u64 = 40;

pub const CURVE_HEADER: [&str; 8] = [
    "step",
    "phase",
    "loss_pre",
    "loss_critic",
    "loss_actor",
    "eval_return",
    "normalized_score",
    "latent_rank",
];

pub const RUN_HEADER: [&str; 21] = [
    "run",
    "env",
    "algorithm",
    "tier",
    "reduction",
    "fraction",
    "mode",
    "seed",
    "n_transitions",
    "pretrain_steps",
    "rl_steps",
    "final_return",
    "final_score",
    "best_score",
    "rank_rl_start",
    "rank_final",
    "pretrain_holdout_mse",
    "pretrained_phi",
    "rl_start_phi",
    "lineage",
    "status",
];

/// Reduced and (optionally) normalized data shared by every mode of a
/// `(fraction, seed)` pair.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub data: Dataset,
    pub normalizer: Normalizer,
}

pub fn prepare(raw: &Dataset, cfg: &RunConfig, fraction: f64, seed: u64) -> Result<PreparedData> {
    let reduced = match cfg.reduction {
        Reduction::Uniform => reduce_uniform(raw, fraction, seed)?,
        Reduction::Prefix => reduce_prefix(raw, fraction)?,
    };
    let normalizer = if cfg.normalize {
        Normalizer::fit(&reduced)?
    } else {
        Normalizer::identity(reduced.obs_dim())
    };
    let data = normalizer.apply(&reduced)?;
    Ok(PreparedData { data, normalizer })
}

pub fn run_name(env: &str, fraction: f64, mode: PretrainMode, seed: u64) -> String {
    format!("{env}_f{fraction}_{mode}_s{seed}")
}

/// One row of `run.csv` / `aggregate.csv`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub run: String,
    pub env: String,
    pub algorithm: String,
    pub tier: String,
    pub reduction: String,
    pub fraction: f64,
    pub mode: String,
    pub seed: u64,
    pub n_transitions: usize,
    pub pretrain_steps: usize,
    pub rl_steps: usize,
    pub final_return: Option<f64>,
    pub final_score: Option<f64>,
    pub best_score: Option<f64>,
    pub rank_rl_start: Option<usize>,
    pub rank_final: Option<usize>,
    pub pretrain_holdout_mse: Option<f64>,
    pub pretrained_phi: String,
    pub rl_start_phi: String,
    pub lineage: String,
    pub status: String,
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("cannot parse {s:?}"))
}

fn parse_req<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

impl RunSummary {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.run.clone(),
            self.env.clone(),
            self.algorithm.clone(),
            self.tier.clone(),
            self.reduction.clone(),
            self.fraction.to_string(),
            self.mode.clone(),
            self.seed.to_string(),
            self.n_transitions.to_string(),
            self.pretrain_steps.to_string(),
            self.rl_steps.to_string(),
            fmt_opt(self.final_return),
            fmt_opt(self.final_score),
            fmt_opt(self.best_score),
            fmt_opt(self.rank_rl_start),
            fmt_opt(self.rank_final),
            fmt_opt(self.pretrain_holdout_mse),
            self.pretrained_phi.clone(),
            self.rl_start_phi.clone(),
            self.lineage.clone(),
            self.status.clone(),
        ]
    }

    pub fn from_record(r: &csv::StringRecord) -> std::result::Result<Self, String> {
        if r.len() != RUN_HEADER.len() {
            return Err(format!("expected {} fields, got {}", RUN_HEADER.len(), r.len()));
        }
        Ok(Self {
            run: r[0].to_string(),
            env: r[1].to_string(),
            algorithm: r[2].to_string(),
            tier: r[3].to_string(),
            reduction: r[4].to_string(),
            fraction: parse_req(&r[5])?,
            mode: r[6].to_string(),
            seed: parse_req(&r[7])?,
            n_transitions: parse_req(&r[8])?,
            pretrain_steps: parse_req(&r[9])?,
            rl_steps: parse_req(&r[10])?,
            final_return: parse_opt(&r[11])?,
            final_score: parse_opt(&r[12])?,
            best_score: parse_opt(&r[13])?,
            rank_rl_start: parse_opt(&r[14])?,
            rank_final: parse_opt(&r[15])?,
            pretrain_holdout_mse: parse_opt(&r[16])?,
            pretrained_phi: r[17].to_string(),
            rl_start_phi: r[18].to_string(),
            lineage: r[19].to_string(),
            status: r[20].to_string(),
        })
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One `curve.csv` row with its phase.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub phase: &'static str,
    pub loss_pre: Option<f64>,
    pub point: CurvePoint,
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_HEADER)?;
    for r in rows {
        let p = &r.point;
        w.write_record([
            r.step.to_string(),
            r.phase.to_string(),
            fmt_opt(r.loss_pre),
            fmt_opt(p.loss_critic),
            fmt_opt(p.loss_actor),
            fmt_opt(p.eval_return),
            fmt_opt(p.normalized_score),
            fmt_opt(p.latent_rank),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run_csv(path: &Path, s: &RunSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_HEADER)?;
    w.write_record(s.record())?;
    w.flush()?;
    Ok(())
}

/// Pretraining loss averaged over consecutive windows of `every` steps.
pub fn pretrain_rows(loss_curve: &[f64], every: usize) -> Vec<CurveRow> {
    let every = every.max(1);
    loss_curve
        .chunks(every)
        .enumerate()
        .map(|(k, chunk)| {
            let step = (k * every + chunk.len()).min(loss_curve.len());
            CurveRow {
                step,
                phase: "pretrain",
                loss_pre: Some(chunk.iter().sum::<f64>() / chunk.len() as f64),
                point: CurvePoint { step, ..Default::default() },
            }
        })
        .collect()
}

/// Everything the RL phase needs besides its initialization.
pub struct RlSetup<'a> {
    pub env: &'a Env,
    pub refs: &'a ReferenceReturns,
    pub data: &'a Dataset,
    pub normalizer: &'a Normalizer,
    pub algorithm: Algorithm,
    pub hidden: &'a [usize],
    pub batch_size: usize,
    pub lr: f64,
    pub cql_weight: f64,
    pub steps: usize,
    pub seed: u64,
    pub freeze: bool,
    pub joint: bool,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub rank_every: usize,
}

pub struct RlOutcome {
    pub curve: Vec<CurvePoint>,
    pub rl_start_phi: String,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn due(step: usize, total: usize, every: usize) -> bool {
    step == 0 || step == total || (every > 0 && step.is_multiple_of(every))
}

/// Run the RL phase with periodic evaluation and latent-rank measurement.
pub fn run_rl(setup: &RlSetup<'_>, init: (SharedQNet, SharedQNet)) -> Result<RlOutcome> {
    let eval_seed = derive_seed(setup.seed, SALT_EVAL);
    let rank_seed = derive_seed(setup.seed, SALT_RANK);
    let rank_samples = LATENT_RANK_SAMPLES.min(setup.data.len());
    let total = setup.steps;
    let measure = |policy: &dyn Policy, critic: &SharedQNet, p: &mut CurvePoint| -> oqseed_core::Result<()> {
        if due(p.step, total, setup.eval_every) {
            let pol = NormalizedPolicy { inner: policy, normalizer: setup.normalizer };
            let mut env = setup.env.clone();
            let r = evaluate(&pol, &mut env, setup.eval_episodes, eval_seed, Some(setup.refs))?;
            p.eval_return = Some(r.mean_return);
            p.normalized_score = r.normalized_score;
        }
        if due(p.step, total, setup.rank_every) {
            p.latent_rank = Some(latent_rank(critic, setup.data, rank_samples, RANK_TOL_DIAGNOSTIC, rank_seed)?);
        }
        Ok(())
    };
    let rl_start_phi = init.0.phi_checksum();
    let curve = match setup.algorithm {
        Algorithm::Td3Bc => {
            let cfg = Td3BcConfig {
                steps: total,
                seed: derive_seed(setup.seed, SALT_RL),
                freeze: setup.freeze,
                joint: setup.joint,
                gamma: setup.env.gamma(),
                lr: setup.lr,
                batch_size: setup.batch_size,
                hidden: setup.hidden.to_vec(),
                actor_hidden: setup.hidden.to_vec(),
                log_every: gcd(setup.eval_every, setup.rank_every).max(1),
                ..Default::default()
            };
            td3bc_train_observed(setup.data, Some(init), &cfg, &mut |agent, p| {
                measure(agent, &agent.critic1, p)
            })?
            .1
        }
        Algorithm::CqlDiscrete => {
            if setup.joint {
                return Err(HarnessError::Config("joint mode is only defined for td3bc".into()));
            }
            let mut net = init.0;
            if setup.freeze {
                net = net.freeze_backbone();
            }
            let cfg = CqlConfig {
                steps: total,
                seed: derive_seed(setup.seed, SALT_RL),
                cql_weight: setup.cql_weight,
                gamma: setup.env.gamma(),
                lr: setup.lr,
                batch_size: setup.batch_size,
                hidden: setup.hidden.to_vec(),
                log_every: gcd(setup.eval_every, setup.rank_every).max(1),
                ..Default::default()
            };
            cql_discrete_train_observed(setup.data, Some(net), &cfg, &mut |agent, p| {
                measure(agent, &agent.qnet, p)
            })?
            .1
        }
    };
    Ok(RlOutcome { curve, rl_start_phi })
}

/// Fresh, unpretrained critic pair for `seed`.
pub fn fresh_pair(obs_dim: usize, act_dim: usize, hidden: &[usize], seed: u64) -> Result<(SharedQNet, SharedQNet)> {
    let net = SharedQNet::new(obs_dim, act_dim, hidden, &mut Rng::new(derive_seed(seed, SALT_INIT)))?;
    Ok(twin_critics(&net, derive_seed(seed, SALT_TWIN))?)
}

pub struct CellInputs<'a> {
    pub cfg: &'a RunConfig,
    /// Verbatim config text, stored as the run's snapshot.
    pub cfg_text: &'a str,
    pub env: &'a Env,
    pub refs: &'a ReferenceReturns,
    pub prepared: &'a PreparedData,
    pub fraction: f64,
    pub mode: PretrainMode,
    pub seed: u64,
}

/// Run one cell into `root/<run name>` and return its summary row.
pub fn run_cell(inp: &CellInputs<'_>, root: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    let cfg = inp.cfg;
    let data = &inp.prepared.data;
    let name = run_name(&cfg.env, inp.fraction, inp.mode, inp.seed);
    let dir = root.join(&name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), inp.cfg_text)?;
    let mut summary = RunSummary {
        run: name,
        env: cfg.env.clone(),
        algorithm: cfg.algorithm.as_str().into(),
        tier: data.meta.tier.clone(),
        reduction: cfg.reduction.as_str().into(),
        fraction: inp.fraction,
        mode: inp.mode.as_str().into(),
        seed: inp.seed,
        n_transitions: data.len(),
        pretrain_steps: cfg.pretrain_steps_for(inp.mode),
        rl_steps: cfg.rl_steps_for(inp.mode),
        lineage: data.meta.lineage.join(";"),
        ..Default::default()
    };
    let (obs_dim, act_dim) = (data.obs_dim(), data.act_dim());
    let mut rows = Vec::new();
    let init = if inp.mode.pretrains() {
        let pre_cfg = |salt| PretrainConfig {
            steps: cfg.pretrain_steps,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: derive_seed(inp.seed, salt),
        };
        let mut net = SharedQNet::new(obs_dim, act_dim, &cfg.hidden, &mut Rng::new(derive_seed(inp.seed, SALT_INIT)))?;
        let report = pretrain(&mut net, data, &pre_cfg(SALT_PRETRAIN))?;
        save_checkpoint(&net, dir.join("pretrained.oqw"))?;
        rows.extend(pretrain_rows(&report.loss_curve, cfg.pretrain_log_every));
        summary.pretrain_holdout_mse = Some(report.final_holdout_mse);
        summary.pretrained_phi = report.pretrained_phi_checksum;
        if cfg.independent_pretrain {
            let mut other =
                SharedQNet::new(obs_dim, act_dim, &cfg.hidden, &mut Rng::new(derive_seed(inp.seed, SALT_INIT_B)))?;
            pretrain(&mut other, data, &pre_cfg(SALT_PRETRAIN_B))?;
            (net, other)
        } else {
            twin_critics(&net, derive_seed(inp.seed, SALT_TWIN))?
        }
    } else {
        fresh_pair(obs_dim, act_dim, &cfg.hidden, inp.seed)?
    };
    let setup = RlSetup {
        env: inp.env,
        refs: inp.refs,
        data,
        normalizer: &inp.prepared.normalizer,
        algorithm: cfg.algorithm,
        hidden: &cfg.hidden,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        cql_weight: cfg.cql_weight,
        steps: summary.rl_steps,
        seed: inp.seed,
        freeze: inp.mode == PretrainMode::Frozen,
        joint: inp.mode == PretrainMode::Joint,
        eval_every: cfg.eval_every,
        eval_episodes: cfg.eval_episodes,
        rank_every: cfg.rank_every,
    };
    let outcome = run_rl(&setup, init)?;
    summary.rl_start_phi = outcome.rl_start_phi;
    let offset = summary.pretrain_steps;
    for p in &outcome.curve {
        if let Some(l) = [p.loss_critic, p.loss_actor].into_iter().flatten().find(|l| !l.is_finite()) {
            return Err(HarnessError::Core(oqseed_core::Error::Numeric(format!(
                "non-finite loss {l} at RL step {}",
                p.step
            ))));
        }
        rows.push(CurveRow {
            step: offset + p.step,
            phase: "rl",
            loss_pre: None,
            point: p.clone(),
        });
    }
    let evals: Vec<&CurvePoint> = outcome.curve.iter().filter(|p| p.eval_return.is_some()).collect();
    if let Some(last) = evals.last() {
        summary.final_return = last.eval_return;
        summary.final_score = last.normalized_score;
    }
    summary.best_score = evals.iter().filter_map(|p| p.normalized_score).reduce(f64::max);
    let ranks: Vec<usize> = outcome.curve.iter().filter_map(|p| p.latent_rank).collect();
    summary.rank_rl_start = ranks.first().copied();
    summary.rank_final = ranks.last().copied();
    summary.status = "ok".into();
    write_curve(&dir.join("curve.csv"), &rows)?;
    write_run_csv(&dir.join("run.csv"), &summary)?;
    fs::write(dir.join("wallclock.txt"), format!("{:.3}\n", start.elapsed().as_secs_f64()))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretrain_rows_average_windows() {
        let rows = pretrain_rows(&[1.0, 3.0, 5.0, 7.0, 9.0], 2);
        let got: Vec<(usize, f64)> = rows.iter().map(|r| (r.step, r.loss_pre.unwrap())).collect();
        assert_eq!(got, vec![(2, 2.0), (4, 6.0), (5, 9.0)]);
        assert!(rows.iter().all(|r| r.phase == "pretrain"));
    }

    #[test]
    fn summary_record_round_trips() {
        let s = RunSummary {
            run: "pointmass_f0.1_on_s0".into(),
            fraction: 0.1,
            final_score: Some(87.25),
            rank_final: Some(31),
            status: "ok".into(),
            ..Default::default()
        };
        let rec = csv::StringRecord::from(s.record());
        assert_eq!(RunSummary::from_record(&rec).unwrap(), s);
    }

    #[test]
    fn names() {
        assert_eq!(run_name("pointmass", 0.1, PretrainMode::On, 3), "pointmass_f0.1_on_s3");
        assert_eq!(run_name("gridworld-4", 1.0, PretrainMode::Off, 0), "gridworld-4_f1_off_s0");
    }
}
