use std::sync::Arc;

use crate::baselines::{HoveringGreedy, PlanPolicy, Policy, RandomWalk};
use crate::env::{esa, AerialEnv, Action, NetworkConfig, TraceRow};
use crate::nn::PolicyParams;
use crate::par::Exec;
use crate::ppo::{ActionSelection, PpoPolicy};
use crate::seeding::{self, stream};
use crate::stats;
use crate::Result;

/// A policy recipe that can be instantiated once per episode.
#[derive(Debug, Clone)]
pub enum Agent {
    RandomWalk,
    HoveringGreedy,
    Plan(Arc<Vec<Action>>),
    Ppo(Arc<PolicyParams>, ActionSelection),
}

impl Agent {
    pub fn instantiate(&self, seed: u64) -> Box<dyn Policy> {
        match self {
            Agent::RandomWalk => Box::new(RandomWalk::new(seed)),
            Agent::HoveringGreedy => Box::new(HoveringGreedy::new()),
            Agent::Plan(actions) => Box::new(PlanPolicy::new(Arc::clone(actions))),
            Agent::Ppo(params, sel) => Box::new(PpoPolicy::new(Arc::clone(params), *sel, seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub esa: f64,
    pub per_device_age: Vec<f64>,
    pub mean_reward: f64,
    pub violations: usize,
}

/// Runs one episode from `reset(episode_seed)`; optionally records the trace.
pub fn run_episode(
    policy: &mut dyn Policy,
    env: &mut AerialEnv,
    episode_seed: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<EpisodeResult> {
    env.reset(episode_seed);
    policy.begin_episode(env);
    let m = env.config().num_devices();
    let mut aoi = Vec::with_capacity(env.config().horizon);
    let mut reward = 0.0;
    let mut violations = 0;
    while !env.is_done() {
        let before = env.state().clone();
        let action = policy.act(env);
        let out = env.step(action)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow::from_step(&before, action, &out));
        }
        reward += out.reward;
        violations += usize::from(out.altitude_violation);
        aoi.push(out.next_state.aoi);
    }
    let n = aoi.len() as f64;
    let per_device_age = (0..m)
        .map(|i| aoi.iter().map(|row| row[i] as f64).sum::<f64>() / n)
        .collect();
    Ok(EpisodeResult {
        esa: esa(&aoi)?,
        per_device_age,
        mean_reward: reward / n,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_esa: f64,
    pub std_esa: f64,
    pub per_device_age: Vec<f64>,
    pub mean_reward: f64,
    pub episodes: Vec<EpisodeResult>,
}

/// Seed of evaluation episode `k` for base seed `seed`.
pub fn eval_episode_seed(seed: u64, k: usize) -> u64 {
    seeding::derive(seed, stream::EVAL, k as u64)
}

/// Sample mean/std of per-episode ESA over `episodes` seeded episodes.
pub fn evaluate_policy(
    agent: &Agent,
    config: Arc<NetworkConfig>,
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Result<Evaluation> {
    let results = exec.map_range(episodes, |k| {
        let mut env = AerialEnv::new(Arc::clone(&config))?;
        let mut policy = agent.instantiate(seeding::derive(seed, stream::POLICY, k as u64));
        run_episode(policy.as_mut(), &mut env, eval_episode_seed(seed, k), None)
    });
    let episodes: Vec<EpisodeResult> = results.into_iter().collect::<Result<_>>()?;
    let esas: Vec<f64> = episodes.iter().map(|e| e.esa).collect();
    let m = config.num_devices();
    let per_device_age = (0..m)
        .map(|i| stats::mean(&episodes.iter().map(|e| e.per_device_age[i]).collect::<Vec<_>>()))
        .collect();
    Ok(Evaluation {
        mean_esa: stats::mean(&esas),
        std_esa: stats::std_dev(&esas),
        per_device_age,
        mean_reward: stats::mean(&episodes.iter().map(|e| e.mean_reward).collect::<Vec<_>>()),
        episodes,
    })
}
