use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use aris_aoi::baselines::{dp_oracle, PolicyKind, DEFAULT_STATE_BUDGET};
use aris_aoi::env::{write_trace_csv, AerialEnv, NetworkConfig};
use aris_aoi::harness::config::ConfigFile;
use aris_aoi::harness::{
    eval_episode_seed, evaluate_policy, load_config, run_episode, run_experiment, run_oracle, write_oracle_csv,
    Agent, LoadedConfig,
};
use aris_aoi::nn::{load_checkpoint, save_checkpoint, Checkpoint, MlpSpec, PolicyParams};
use aris_aoi::par::Exec;
use aris_aoi::ppo::{train, write_metrics_csv, ActionSelection};
use clap::{Args, Parser, Subcommand};

/// Aerial-RIS age-of-information simulator and PPO trainer.
#[derive(Parser)]
#[command(name = "aris", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config with [network], [ppo] and [experiment] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network seed; for `sweep`, replaces the experiment seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `section.key=value`, applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run sequentially instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Verb {
    /// Train PPO on the configured network; writes a checkpoint and learning curve.
    Train(Common),
    /// Evaluate one policy; writes a summary and the first episode's trace.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "hovering_greedy")]
        policy: String,
        /// Checkpoint for `trained_ppo`; trains from scratch when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the configured experiment sweep.
    Sweep(Common),
    /// Solve fixed-trace instances exactly, one per experiment seed.
    Oracle(Common),
    /// Print the resolved config with random draws made explicit.
    DumpConfig(Common),
}

impl Common {
    fn load(&self, seed_key: &str) -> aris_aoi::Result<LoadedConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(match seed_key {
                "experiment.seeds" => format!("experiment.seeds=[{s}]"),
                k => format!("{k}={s}"),
            });
        }
        load_config(self.config.as_deref(), &overrides)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn write_resolved(file: &ConfigFile, dir: &Path) -> anyhow::Result<()> {
    fs::write(dir.join("resolved_config.toml"), file.dump()?)?;
    Ok(())
}

fn cmd_train(c: &Common) -> anyhow::Result<()> {
    let cfg = c.load("network.seed")?;
    let dir = c.out_dir()?;
    write_resolved(&cfg.file, dir)?;
    let seed = cfg.network.seed;
    let out = train(Arc::new(cfg.network.clone()), cfg.ppo.clone(), seed)?;
    write_metrics_csv(&out.curve, File::create(dir.join("training_metrics.csv"))?)?;
    let step = out.curve.last().map_or(0, |m| m.samples as u64);
    save_checkpoint(&Checkpoint { params: out.params, seed, step }, File::create(dir.join("checkpoint.txt"))?)?;
    if let Some(last) = out.curve.last() {
        println!("iterations={} samples={} last_esa={:.4} last_reward={:.4}", last.iteration, last.samples, last.esa, last.mean_reward);
    }
    Ok(())
}

fn load_params(path: &Path, net: &NetworkConfig) -> anyhow::Result<PolicyParams> {
    let ckpt = load_checkpoint(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
    let m = net.num_devices();
    let expected = MlpSpec::actor_critic(2 * m + 1, m, ckpt.params.spec().hidden.clone());
    if ckpt.params.spec() != &expected {
        bail!(aris_aoi::Error::config("--checkpoint", format!("network shape does not match a {m}-device environment")));
    }
    Ok(ckpt.params)
}

fn cmd_evaluate(c: &Common, policy: &str, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let cfg = c.load("network.seed")?;
    let kind: PolicyKind = policy.parse()?;
    let dir = c.out_dir()?;
    write_resolved(&cfg.file, dir)?;
    let net = Arc::new(cfg.network.clone());
    let seed = net.seed;
    let agent = match kind {
        PolicyKind::RandomWalk => Agent::RandomWalk,
        PolicyKind::HoveringGreedy => Agent::HoveringGreedy,
        PolicyKind::DpOracle => {
            let sol = dp_oracle(&net, net.horizon as u32, eval_episode_seed(seed, 0), DEFAULT_STATE_BUDGET)?;
            Agent::Plan(Arc::new(sol.actions))
        }
        PolicyKind::TrainedPpo => {
            let params = match checkpoint {
                Some(p) => load_params(p, &net)?,
                None => train(Arc::clone(&net), cfg.ppo.clone(), seed)?.params,
            };
            Agent::Ppo(Arc::new(params), ActionSelection::default())
        }
    };
    let ev = evaluate_policy(&agent, Arc::clone(&net), cfg.experiment.episodes_per_point, seed, c.exec())?;

    let mut env = AerialEnv::new(Arc::clone(&net))?;
    let mut p = agent.instantiate(aris_aoi::seeding::derive(seed, aris_aoi::seeding::stream::POLICY, 0));
    let mut rows = Vec::new();
    run_episode(p.as_mut(), &mut env, eval_episode_seed(seed, 0), Some(&mut rows))?;
    write_trace_csv(&rows, File::create(dir.join("trace.csv"))?)?;

    let mut w = csv_writer(&dir.join("evaluation.csv"))?;
    writeln!(w, "policy,episodes,esa_mean,esa_std,mean_reward,per_device_ages")?;
    let ages: Vec<String> = ev.per_device_age.iter().map(|a| format!("{a:e}")).collect();
    writeln!(
        w,
        "{},{},{:e},{:e},{:e},{}",
        kind.name(),
        ev.episodes.len(),
        ev.mean_esa,
        ev.std_esa,
        ev.mean_reward,
        ages.join(";")
    )?;
    println!("policy={} esa={:.4} std={:.4}", kind.name(), ev.mean_esa, ev.std_esa);
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<std::io::BufWriter<File>> {
    Ok(std::io::BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_sweep(c: &Common) -> anyhow::Result<()> {
    let mut cfg = c.load("experiment.seeds")?;
    cfg.experiment.output_dir = c.out_dir()?.to_path_buf();
    let out = run_experiment(&cfg.experiment, &cfg.file.network, &cfg.ppo, c.exec())?;
    write_resolved(&cfg.file, &out.dir)?;
    for a in &out.aggregates {
        println!("{:<16} {:>12} n={:<3} esa={:.4} ± {:.4}", a.policy, a.sweep_value, a.n, a.esa_mean, a.esa_std);
    }
    println!("{} new rows, results in {}", out.executed, out.dir.display());
    Ok(())
}

fn cmd_oracle(c: &Common) -> anyhow::Result<()> {
    let cfg = c.load("network.seed")?;
    let dir = c.out_dir()?;
    write_resolved(&cfg.file, dir)?;
    let seeds = match c.seed {
        Some(s) => vec![s],
        None => cfg.experiment.seeds.clone(),
    };
    let instances = seeds
        .iter()
        .map(|&s| Ok((format!("seed{s}"), cfg.file.network.resolve(s)?)))
        .collect::<aris_aoi::Result<Vec<_>>>()?;
    let rows = run_oracle(&instances, cfg.network.horizon as u32, c.exec())?;
    write_oracle_csv(&dir.join("oracle.csv"), &rows)?;
    for r in &rows {
        println!("{} optimal_esa={:.6} runtime_ms={:.1}", r.instance_id, r.optimal_esa, r.runtime_ms);
    }
    Ok(())
}

fn cmd_dump(c: &Common) -> anyhow::Result<()> {
    let cfg = c.load("network.seed")?;
    print!("{}", cfg.file.dump()?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Train(c) => cmd_train(c),
        Verb::Evaluate { common, policy, checkpoint } => cmd_evaluate(common, policy, checkpoint.as_deref()),
        Verb::Sweep(c) => cmd_sweep(c),
        Verb::Oracle(c) => cmd_oracle(c),
        Verb::DumpConfig(c) => cmd_dump(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.downcast_ref::<aris_aoi::Error>().is_some_and(aris_aoi::Error::is_config);
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}
