//! Fraction × pretrain-mode × seed sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use oqseed_core::datasets::load;
use oqseed_core::envs::{reference_returns, Env};

use crate::config::RunConfig;
use crate::runner::{prepare, run_cell, run_name, CellInputs, PreparedData, RunSummary, RUN_HEADER};
use crate::{resolve_out, HarnessError, Result};

pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub root: PathBuf,
    pub rows: Vec<RunSummary>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Parse `cfg_text` and run the sweep under its (resolved) output directory.
pub fn cmd_sweep(cfg_text: &str) -> Result<SweepOutcome> {
    let cfg = RunConfig::parse(cfg_text)?;
    let root = resolve_out(&cfg.out);
    sweep(&cfg, cfg_text, &root)
}

fn fraction_key(f: f64) -> u64 {
    f.to_bits()
}

/// Run every cell; failed cells are recorded in the aggregate and do not stop
/// the sweep.
pub fn sweep(cfg: &RunConfig, cfg_text: &str, root: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    let raw = load(&cfg.dataset)
        .map_err(|e| HarnessError::Config(format!("cannot load dataset {}: {e}", cfg.dataset.display())))?;
    if raw.meta.env != cfg.env || raw.meta.tier != cfg.tier_label() {
        return Err(HarnessError::Config(format!(
            "dataset {} holds env={} tier={}, config asks for env={} tier={}",
            cfg.dataset.display(),
            raw.meta.env,
            raw.meta.tier,
            cfg.env,
            cfg.tier_label()
        )));
    }
    let env = Env::from_name(&cfg.env)?;
    if raw.obs_dim() != env.obs_dim() || raw.act_dim() != env.act_dim() {
        return Err(HarnessError::Config("dataset dimensions do not match the env".into()));
    }
    let refs = reference_returns(&env)?;
    fs::create_dir_all(root)?;
    fs::write(root.join("config.txt"), cfg_text)?;

    let mut prepared: BTreeMap<(u64, u64), std::result::Result<PreparedData, String>> = BTreeMap::new();
    for &f in &cfg.fractions {
        for &seed in &cfg.seeds {
            prepared
                .entry((fraction_key(f), seed))
                .or_insert_with(|| prepare(&raw, cfg, f, seed).map_err(|e| e.to_string()));
        }
    }
    let mut cells = Vec::new();
    for &f in &cfg.fractions {
        for &mode in &cfg.pretrain_modes {
            for &seed in &cfg.seeds {
                cells.push((f, mode, seed));
            }
        }
    }
    let rows: Vec<RunSummary> = cells
        .par_iter()
        .map(|&(fraction, mode, seed)| {
            let failed = |msg: String| RunSummary {
                run: run_name(&cfg.env, fraction, mode, seed),
                env: cfg.env.clone(),
                algorithm: cfg.algorithm.as_str().into(),
                tier: cfg.tier_label(),
                reduction: cfg.reduction.as_str().into(),
                fraction,
                mode: mode.as_str().into(),
                seed,
                pretrain_steps: cfg.pretrain_steps_for(mode),
                rl_steps: cfg.rl_steps_for(mode),
                status: format!("failed: {msg}"),
                ..Default::default()
            };
            let data = match &prepared[&(fraction_key(fraction), seed)] {
                Ok(d) => d,
                Err(e) => return failed(e.clone()),
            };
            let inputs = CellInputs {
                cfg,
                cfg_text,
                env: &env,
                refs: &refs,
                prepared: data,
                fraction,
                mode,
                seed,
            };
            run_cell(&inputs, root).unwrap_or_else(|e| failed(e.to_string()))
        })
        .collect();
    write_aggregate(&root.join(AGGREGATE_FILE), &rows)?;
    Ok(SweepOutcome {
        root: root.to_path_buf(),
        rows,
    })
}

pub fn write_aggregate(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<Vec<RunSummary>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(RUN_HEADER.iter().copied()) {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            message: "unexpected header".into(),
        });
    }
    r.records()
        .map(|rec| {
            RunSummary::from_record(&rec?).map_err(|message| HarnessError::Parse {
                path: path.to_path_buf(),
                message,
            })
        })
        .collect()
}
