//! Single-shot commands: dataset generation, pretraining and training.

use std::fs;
use std::path::Path;

use oqseed_core::datasets::{load, save, Dataset, Normalizer};
use oqseed_core::envs::{collect_dataset, Env, Tier};
use oqseed_core::numerics::{derive_seed, Rng};
use oqseed_core::shared_qnet::{pretrain, save_checkpoint, PretrainConfig, PretrainReport, SharedQNet};

use crate::config::RunConfig;
use crate::runner::{SALT_INIT, SALT_PRETRAIN};
use crate::sweep::{sweep, SweepOutcome};
use crate::{resolve_out, HarnessError, Result};

/// Collect `n` transitions per tier and save them to `out`. Several tiers
/// are concatenated in order; tier `i > 0` is collected with a derived seed.
pub fn cmd_gen_data(env_name: &str, tiers: &[Tier], n: usize, seed: u64, out: &Path) -> Result<Dataset> {
    if n == 0 {
        return Err(HarnessError::Config("n must be >= 1".into()));
    }
    if tiers.is_empty() {
        return Err(HarnessError::Config("at least one tier is required".into()));
    }
    let mut env = Env::from_name(env_name)?;
    let parts = tiers
        .iter()
        .enumerate()
        .map(|(i, &tier)| {
            let s = if i == 0 { seed } else { derive_seed(seed, i as u64) };
            let policy = env.behavior_policy(tier);
            collect_dataset(&mut env, &policy, n, s)
        })
        .collect::<oqseed_core::Result<Vec<_>>>()?;
    let d = if parts.len() == 1 { parts.into_iter().next().unwrap() } else { Dataset::concat(&parts)? };
    let out = resolve_out(out);
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save(&d, &out)?;
    Ok(d)
}

#[derive(Clone, Debug)]
pub struct PretrainArgs {
    pub hidden: Vec<usize>,
    pub normalize: bool,
    pub config: PretrainConfig,
}

/// Pretrain a fresh network on a whole dataset. Writes the checkpoint to
/// `out` and the per-step loss to `out` with a `.loss.csv` suffix.
pub fn cmd_pretrain(dataset: &Path, args: &PretrainArgs, out: &Path) -> Result<PretrainReport> {
    let raw = load(dataset)?;
    let normalizer = if args.normalize { Normalizer::fit(&raw)? } else { Normalizer::identity(raw.obs_dim()) };
    let data = normalizer.apply(&raw)?;
    let seed = args.config.seed;
    let mut net = SharedQNet::new(
        data.obs_dim(),
        data.act_dim(),
        &args.hidden,
        &mut Rng::new(derive_seed(seed, SALT_INIT)),
    )?;
    let cfg = PretrainConfig {
        seed: derive_seed(seed, SALT_PRETRAIN),
        ..args.config.clone()
    };
    let report = pretrain(&mut net, &data, &cfg)?;
    let out = resolve_out(out);
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&net, &out)?;
    let mut w = csv::Writer::from_path(loss_path(&out))?;
    w.write_record(["step", "loss_pre"])?;
    for (i, l) in report.loss_curve.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(report)
}

pub fn loss_path(checkpoint: &Path) -> std::path::PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".loss.csv");
    s.into()
}

/// Train exactly one (fraction, mode, seed) cell.
pub fn cmd_train(cfg_text: &str) -> Result<SweepOutcome> {
    let cfg = RunConfig::parse(cfg_text)?;
    if cfg.fractions.len() != 1 || cfg.pretrain_modes.len() != 1 || cfg.seeds.len() != 1 {
        return Err(HarnessError::Config(
            "train runs a single cell: give exactly one fraction, pretrain mode and seed (use sweep for grids)".into(),
        ));
    }
    sweep(&cfg, cfg_text, &resolve_out(&cfg.out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_data_rejects_zero() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_gen_data("pointmass", &[Tier::Medium], 0, 0, &dir.path().join("d.oqd")).unwrap_err();
        assert!(err.to_string().contains("n must be"));
        assert!(!dir.path().join("d.oqd").exists());
    }

    #[test]
    fn gen_data_concatenates_tiers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mix.oqd");
        let d = cmd_gen_data("pointmass", &[Tier::Random, Tier::Expert], 50, 3, &p).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.meta.tier, "random+expert");
        let single = cmd_gen_data("pointmass", &[Tier::Random], 50, 3, &dir.path().join("r.oqd")).unwrap();
        assert_eq!(d.transitions()[..50], single.transitions()[..]);
        assert_eq!(load(&p).unwrap(), d);
    }

    #[test]
    fn pretrain_writes_checkpoint_and_loss() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.oqd");
        cmd_gen_data("pointmass", &[Tier::Medium], 200, 1, &data).unwrap();
        let ck = dir.path().join("net.oqw");
        let args = PretrainArgs {
            hidden: vec![8],
            normalize: true,
            config: PretrainConfig { steps: 30, batch_size: 16, ..Default::default() },
        };
        let rep = cmd_pretrain(&data, &args, &ck).unwrap();
        let net = oqseed_core::shared_qnet::load_checkpoint(&ck).unwrap();
        assert_eq!(net.phi_checksum(), rep.pretrained_phi_checksum);
        let lines = fs::read_to_string(loss_path(&ck)).unwrap().lines().count();
        assert_eq!(lines, 31);
    }

    #[test]
    fn train_requires_single_cell() {
        let err = cmd_train("fractions=0.1,1.0\npretrain_modes=on\nseeds=0\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
    }
}
