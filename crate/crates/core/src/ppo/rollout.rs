use std::sync::Arc;

use crate::env::{esa, AerialEnv, AltitudeMove, Action, NetworkConfig};
use crate::nn::{categorical_sample, PolicyParams, ALTITUDE_HEAD, SCHEDULE_HEAD, VALUE_HEAD};
use crate::par::Exec;
use crate::seeding::{self, stream, Rng};
use crate::Result;

/// One environment plus its own action-sampling stream.
#[derive(Debug, Clone)]
pub struct RolloutWorker {
    env: AerialEnv,
    rng: Rng,
    seed: u64,
    episodes: u64,
    aoi_trace: Vec<Vec<u32>>,
    episode_reward: f64,
}

/// Summary of an episode that finished during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub esa: f64,
    pub total_reward: f64,
}

impl RolloutWorker {
    pub fn new(config: Arc<NetworkConfig>, seed: u64, index: u64) -> Result<Self> {
        let seed = seeding::derive(seed, stream::WORKER, index);
        let mut env = AerialEnv::new(config)?;
        env.reset(seeding::derive(seed, stream::EPISODE, 0));
        Ok(Self {
            env,
            rng: seeding::rng(seeding::derive(seed, stream::POLICY, 0)),
            seed,
            episodes: 1,
            aoi_trace: Vec::new(),
            episode_reward: 0.0,
        })
    }

    pub fn env(&self) -> &AerialEnv {
        &self.env
    }

    fn start_next_episode(&mut self) {
        self.env.reset(seeding::derive(self.seed, stream::EPISODE, self.episodes));
        self.episodes += 1;
        self.aoi_trace.clear();
        self.episode_reward = 0.0;
    }
}

/// On-policy buffer. Arrays are indexed by transition; `segments` delimits
/// the contiguous run of each worker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub features: Vec<Vec<f64>>,
    pub schedule: Vec<usize>,
    pub altitude: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub segments: Vec<Segment>,
    pub episodes: Vec<EpisodeSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn append(&mut self, mut other: Trajectory) {
        let offset = self.len();
        for mut s in other.segments.drain(..) {
            s.start += offset;
            self.segments.push(s);
        }
        self.features.append(&mut other.features);
        self.schedule.append(&mut other.schedule);
        self.altitude.append(&mut other.altitude);
        self.log_probs.append(&mut other.log_probs);
        self.rewards.append(&mut other.rewards);
        self.values.append(&mut other.values);
        self.dones.append(&mut other.dones);
        self.episodes.append(&mut other.episodes);
    }

    /// Fills `advantages` and `returns` segment by segment, on rewards
    /// multiplied by `reward_scale`. Stored rewards stay unscaled.
    pub fn compute_advantages(&mut self, discount: f64, lambda: f64, reward_scale: f64) {
        self.advantages = vec![0.0; self.len()];
        self.returns = vec![0.0; self.len()];
        for s in &self.segments {
            let r = s.start..s.start + s.len;
            let scaled: Vec<f64> = self.rewards[r.clone()].iter().map(|x| x * reward_scale).collect();
            let (adv, ret) = super::compute_gae(
                &scaled,
                &self.values[r.clone()],
                &self.dones[r.clone()],
                s.bootstrap_value,
                discount,
                lambda,
            );
            self.advantages[r.clone()].copy_from_slice(&adv);
            self.returns[r].copy_from_slice(&ret);
        }
    }
}

fn collect_one(worker: &mut RolloutWorker, params: &PolicyParams, steps: usize) -> Result<Trajectory> {
    let mut t = Trajectory::default();
    for _ in 0..steps {
        let obs = worker.env.observe();
        let out = params.forward(&obs)?;
        let (s, lp_s) = categorical_sample(&out[SCHEDULE_HEAD], &mut worker.rng);
        let (a, lp_a) = categorical_sample(&out[ALTITUDE_HEAD], &mut worker.rng);
        let action = Action::new(s, AltitudeMove::from_index(a).expect("altitude head has three outputs"));
        let outcome = worker.env.step(action)?;
        worker.aoi_trace.push(outcome.next_state.aoi.clone());
        worker.episode_reward += outcome.reward;

        t.features.push(obs);
        t.schedule.push(s);
        t.altitude.push(a);
        t.log_probs.push(lp_s + lp_a);
        t.rewards.push(outcome.reward);
        t.values.push(out[VALUE_HEAD][0]);
        t.dones.push(outcome.done);

        if outcome.done {
            t.episodes.push(EpisodeSummary {
                esa: esa(&worker.aoi_trace)?,
                total_reward: worker.episode_reward,
            });
            worker.start_next_episode();
        }
    }
    let bootstrap_value = params.forward(&worker.env.observe())?[VALUE_HEAD][0];
    t.segments.push(Segment { start: 0, len: steps, bootstrap_value });
    Ok(t)
}

/// Runs `steps_per_worker` transitions on every worker with the frozen
/// `params`, auto-resetting at the horizon, and merges by worker index.
pub fn collect_rollout(
    workers: &mut [RolloutWorker],
    params: &PolicyParams,
    steps_per_worker: usize,
    exec: Exec,
) -> Result<Trajectory> {
    let parts = exec.map_mut(workers, |_, w| collect_one(w, params, steps_per_worker));
    let mut merged = Trajectory::default();
    for p in parts {
        merged.append(p?);
    }
    Ok(merged)
}
