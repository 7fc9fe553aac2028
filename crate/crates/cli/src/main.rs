use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use oqseed_cli::audit::{cmd_audit, AuditConfig, FeatureKind};
use oqseed_cli::commands::{cmd_gen_data, cmd_pretrain, cmd_train, loss_path, PretrainArgs};
use oqseed_cli::report::cmd_report;
use oqseed_cli::sweep::{cmd_sweep, SweepOutcome, AGGREGATE_FILE};
use oqseed_cli::{resolve_out, HarnessError};
use oqseed_core::envs::Tier;
use oqseed_core::shared_qnet::PretrainConfig;

#[derive(Parser)]
#[command(name = "oqseed", version, about = "Offline RL with transition-pretrained Q-networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect a behavior dataset.
    GenData {
        #[arg(long, default_value = "pointmass")]
        env: String,
        /// Comma-separated tiers; several tiers are concatenated.
        #[arg(long, default_value = "medium", value_delimiter = ',')]
        tier: Vec<Tier>,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain a network on next-state prediction over a whole dataset.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "256,256", value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 3e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single (fraction, mode, seed) cell.
    Train(ConfigArgs),
    /// Run a fraction × pretrain-mode × seed grid.
    Sweep(ConfigArgs),
    /// Check the projected-Bellman error bound on random tabular instances.
    Audit {
        #[arg(long, default_value_t = 100)]
        n_instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "onehot,random,net", value_delimiter = ',')]
        kinds: Vec<FeatureKind>,
        #[arg(long, default_value_t = 3)]
        min_states: usize,
        #[arg(long, default_value_t = 8)]
        max_states: usize,
        #[arg(long, default_value_t = 2)]
        n_actions: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value = "audit.csv")]
        out: PathBuf,
    },
    /// Plot and summarize run directories (or sweep roots).
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    /// Config file text with overrides appended, so the snapshot parses to
    /// the effective config.
    fn text(&self) -> anyhow::Result<String> {
        let mut text = match &self.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        if !self.set.is_empty() && !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        for kv in &self.set {
            if !kv.contains('=') {
                bail!("--set expects KEY=VALUE, got {kv:?}");
            }
            text.push_str(kv);
            text.push('\n');
        }
        Ok(text)
    }
}

fn finish_sweep(o: SweepOutcome) -> anyhow::Result<()> {
    for r in &o.rows {
        println!("{:<40} {:>10} {}", r.run, fmt_score(r.final_score), r.status);
    }
    println!("aggregate: {}", o.root.join(AGGREGATE_FILE).display());
    match o.failures() {
        0 => Ok(()),
        n => Err(HarnessError::RunsFailed(n).into()),
    }
}

fn fmt_score(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::GenData { env, tier, n, seed, out } => {
            let d = cmd_gen_data(&env, &tier, n, seed, &out)?;
            println!("{} transitions ({} {}) -> {}", d.len(), d.meta.env, d.meta.tier, resolve_out(&out).display());
        }
        Cmd::Pretrain { dataset, hidden, steps, batch_size, lr, seed, normalize, out } => {
            let args = PretrainArgs {
                hidden,
                normalize,
                config: PretrainConfig { steps, batch_size, lr, seed },
            };
            let rep = cmd_pretrain(&dataset, &args, &out)?;
            let out = resolve_out(&out);
            println!("holdout mse {:.3e}", rep.final_holdout_mse);
            println!("phi {}", rep.pretrained_phi_checksum);
            println!("checkpoint {} loss {}", out.display(), loss_path(&out).display());
        }
        Cmd::Train(c) => finish_sweep(cmd_train(&c.text()?)?)?,
        Cmd::Sweep(c) => finish_sweep(cmd_sweep(&c.text()?)?)?,
        Cmd::Audit { n_instances, seed, kinds, min_states, max_states, n_actions, gamma, out } => {
            let cfg = AuditConfig { n_instances, seed, kinds, min_states, max_states, n_actions, gamma };
            let out = resolve_out(&out);
            let s = cmd_audit(&cfg, &out)?;
            for kind in [FeatureKind::OneHot, FeatureKind::Random, FeatureKind::Net] {
                if let Some(rate) = s.holds_rate(Some(kind)) {
                    println!("{:<8} holds-rate {:.3}", kind.as_str(), rate);
                }
            }
            println!("{} rows -> {}", s.rows.len(), out.display());
        }
        Cmd::Report { runs, out } => {
            let out = resolve_out(&out);
            let r = cmd_report(&runs, &out)?;
            print!("{}", std::fs::read_to_string(&r.summary_txt)?);
            for (dir, why) in &r.skipped {
                eprintln!("skipped {}: {why}", dir.display());
            }
            if !r.skipped.is_empty() {
                bail!("{} run(s) skipped", r.skipped.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
