//! Proximal policy optimisation over the factored (schedule, altitude) action.
//!
//! Each iteration collects `rollout_length` transitions with the frozen
//! sampling policy, computes GAE advantages, then runs `epochs_per_iter`
//! passes of shuffled minibatch Adam ascent on
//! `L_clip − value_coef · MSE(value) + entropy_coef · entropy`.
//! The buffer is discarded afterwards and the sampling policy re-synced.

mod gae;
mod objective;
mod rollout;

use std::sync::Arc;

use rand::seq::SliceRandom;

pub use gae::compute_gae;
pub use objective::{clip_objective, sample_objective, ObjectiveWeights, SampleTarget, SampleTerms};
pub use rollout::{collect_rollout, EpisodeSummary, RolloutWorker, Segment, Trajectory};

use crate::baselines::Policy;
use crate::env::{AerialEnv, AltitudeMove, Action, NetworkConfig};
use crate::nn::{argmax, categorical_sample, AdamState, MlpSpec, PolicyParams, ALTITUDE_HEAD, SCHEDULE_HEAD};
use crate::par::Exec;
use crate::seeding::{self, stream, Rng};
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub rollout_length: usize,
    pub epochs_per_iter: usize,
    pub minibatch_size: usize,
    pub clip_epsilon: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub total_samples: usize,
    pub advantage_normalization: bool,
    /// Multiplier applied to rewards before GAE, so value targets stay O(1).
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    /// Parallel environments; `rollout_length` is split evenly across them.
    pub num_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            rollout_length: 240,
            epochs_per_iter: 10,
            minibatch_size: 60,
            clip_epsilon: 0.2,
            discount: 0.9,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 1e-3,
            total_samples: 48_000,
            advantage_normalization: true,
            reward_scale: 0.01,
            hidden: vec![64, 64, 64],
            num_envs: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |k: &str, m: &str| Err(Error::config(format!("ppo.{k}"), m));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return err("clip_epsilon", "must lie in (0, 1)");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return err("discount", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return err("gae_lambda", "must lie in [0, 1]");
        }
        if self.rollout_length == 0 {
            return err("rollout_length", "must be >= 1");
        }
        if self.num_envs == 0 || self.rollout_length % self.num_envs != 0 {
            return err("num_envs", "must be >= 1 and divide rollout_length");
        }
        if self.minibatch_size == 0 || self.epochs_per_iter == 0 {
            return err("minibatch_size", "minibatch size and epoch count must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate", "must be finite and > 0");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return err("reward_scale", "must be finite and > 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden", "need at least one hidden layer, widths >= 1");
        }
        Ok(())
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            clip_epsilon: self.clip_epsilon,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }

    pub fn iterations(&self) -> usize {
        self.total_samples.div_ceil(self.rollout_length)
    }
}

/// Per-iteration training metrics; one CSV row each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub samples: usize,
    pub mean_reward: f64,
    /// Mean ESA over episodes that finished in this iteration (NaN if none).
    pub esa: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Aggregates over one pass of the objective on a set of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub objective: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

fn target(traj: &Trajectory, i: usize, advantages: &[f64]) -> SampleTarget {
    SampleTarget {
        schedule: traj.schedule[i],
        altitude: traj.altitude[i],
        old_log_prob: traj.log_probs[i],
        advantage: advantages[i],
        value_target: traj.returns[i],
    }
}

/// Advantages as used by the update: batch-standardised when enabled.
pub fn training_advantages(traj: &Trajectory, normalize: bool) -> Vec<f64> {
    if !normalize || traj.advantages.len() < 2 {
        return traj.advantages.clone();
    }
    let m = stats::mean(&traj.advantages);
    let var = traj.advantages.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / traj.advantages.len() as f64;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return traj.advantages.iter().map(|a| a - m).collect();
    }
    traj.advantages.iter().map(|a| (a - m) / sd).collect()
}

/// Composite objective (mean over `indices`) and, if `grads` is given, its
/// gradient accumulated into it.
pub fn batch_objective(
    params: &PolicyParams,
    traj: &Trajectory,
    advantages: &[f64],
    indices: &[usize],
    w: &ObjectiveWeights,
    mut grads: Option<&mut [f64]>,
) -> Result<BatchStats> {
    let n = indices.len() as f64;
    let scale = if grads.is_some() { 1.0 / n } else { 0.0 };
    let mut st = BatchStats::default();
    for &i in indices {
        let (out, cache) = params.forward_cached(&traj.features[i])?;
        let (terms, head_grads) = sample_objective(&out, &target(traj, i, advantages), w, scale);
        if let Some(g) = grads.as_deref_mut() {
            params.accumulate_backward(&cache, &head_grads, g)?;
        }
        st.objective += terms.objective(w);
        st.policy_loss -= terms.surrogate;
        st.value_loss += terms.value_loss;
        st.entropy += terms.entropy;
        if (terms.ratio - 1.0).abs() > w.clip_epsilon {
            st.clip_fraction += 1.0;
        }
        st.approx_kl += (terms.ratio - 1.0) - (terms.new_log_prob - traj.log_probs[i]);
    }
    st.objective /= n;
    st.policy_loss /= n;
    st.value_loss /= n;
    st.entropy /= n;
    st.clip_fraction /= n;
    st.approx_kl /= n;
    if !st.objective.is_finite() {
        return Err(Error::NonFinite("PPO objective"));
    }
    Ok(st)
}

/// Epoch-wise shuffled minibatch ascent on a post-processed trajectory.
pub fn update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    traj: &Trajectory,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<BatchStats> {
    if traj.advantages.len() != traj.len() {
        return Err(Error::Domain("trajectory has no advantages; run compute_advantages first".into()));
    }
    let w = cfg.weights();
    let advantages = training_advantages(traj, cfg.advantage_normalization);
    let mut order: Vec<usize> = (0..traj.len()).collect();
    let mut grads = vec![0.0; params.len()];
    let mut last = BatchStats::default();
    let mut count = 0.0;
    let mut acc = BatchStats::default();
    for _ in 0..cfg.epochs_per_iter {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            last = batch_objective(params, traj, &advantages, chunk, &w, Some(&mut grads))?;
            adam.step(params.flat_mut(), &grads, true)?;
            acc.policy_loss += last.policy_loss;
            acc.value_loss += last.value_loss;
            acc.entropy += last.entropy;
            acc.clip_fraction += last.clip_fraction;
            acc.approx_kl += last.approx_kl;
            count += 1.0;
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("policy parameters"));
    }
    Ok(BatchStats {
        objective: last.objective,
        policy_loss: acc.policy_loss / count,
        value_loss: acc.value_loss / count,
        entropy: acc.entropy / count,
        clip_fraction: acc.clip_fraction / count,
        approx_kl: acc.approx_kl / count,
    })
}

/// Training state for one seed: parameters, optimiser, workers and RNG.
pub struct Trainer {
    pub config: PpoConfig,
    pub params: PolicyParams,
    pub adam: AdamState,
    workers: Vec<RolloutWorker>,
    rng: Rng,
    iteration: usize,
    samples: usize,
    seed: u64,
    exec: Exec,
}

impl Trainer {
    pub fn new(env: Arc<NetworkConfig>, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        let m = env.num_devices();
        let spec = MlpSpec::actor_critic(2 * m + 1, m, config.hidden.clone());
        let params = PolicyParams::init(spec, &mut seeding::rng(seeding::derive(seed, stream::INIT, 0)))?;
        let adam = AdamState::new(params.len(), config.learning_rate);
        let workers = (0..config.num_envs)
            .map(|i| RolloutWorker::new(Arc::clone(&env), seed, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rng: seeding::rng(seeding::derive(seed, stream::SHUFFLE, 0)),
            config,
            params,
            adam,
            workers,
            iteration: 0,
            samples: 0,
            seed,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Collect with the frozen snapshot, then optimise. The snapshot is the
    /// current parameters, so syncing θ_old happens implicitly at the next call.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        let steps = self.config.rollout_length / self.config.num_envs;
        let snapshot = self.params.clone();
        let mut traj = collect_rollout(&mut self.workers, &snapshot, steps, self.exec)?;
        traj.compute_advantages(self.config.discount, self.config.gae_lambda, self.config.reward_scale);
        let st = update(&mut self.params, &mut self.adam, &traj, &self.config, &mut self.rng)?;
        self.iteration += 1;
        self.samples += traj.len();
        let esa = if traj.episodes.is_empty() {
            f64::NAN
        } else {
            stats::mean(&traj.episodes.iter().map(|e| e.esa).collect::<Vec<_>>())
        };
        Ok(IterationMetrics {
            iteration: self.iteration,
            samples: self.samples,
            mean_reward: stats::mean(&traj.rewards),
            esa,
            clip_fraction: st.clip_fraction,
            approx_kl: st.approx_kl,
            policy_loss: st.policy_loss,
            value_loss: st.value_loss,
            entropy: st.entropy,
        })
    }

    pub fn policy(&self, selection: ActionSelection, seed: u64) -> PpoPolicy {
        PpoPolicy::new(Arc::new(self.params.clone()), selection, seed)
    }
}

pub struct TrainOutput {
    pub params: PolicyParams,
    pub curve: Vec<IterationMetrics>,
}

/// Runs iterations until `total_samples` are consumed.
pub fn train(env: Arc<NetworkConfig>, config: PpoConfig, seed: u64) -> Result<TrainOutput> {
    let iterations = config.iterations();
    let mut trainer = Trainer::new(env, config, seed)?;
    let mut curve = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        curve.push(trainer.iterate()?);
    }
    Ok(TrainOutput { params: trainer.params, curve })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionSelection {
    /// Mode of each head.
    Greedy,
    /// Draw from the learned distribution, seeded per episode.
    #[default]
    Sample,
}

/// A trained network acting in the environment.
#[derive(Debug, Clone)]
pub struct PpoPolicy {
    params: Arc<PolicyParams>,
    selection: ActionSelection,
    rng: Rng,
}

impl PpoPolicy {
    pub fn new(params: Arc<PolicyParams>, selection: ActionSelection, seed: u64) -> Self {
        Self { params, selection, rng: seeding::rng(seed) }
    }
}

impl Policy for PpoPolicy {
    fn act(&mut self, env: &AerialEnv) -> Action {
        let out = self
            .params
            .forward(&env.observe())
            .expect("policy network sized for this environment");
        let (s, a) = match self.selection {
            ActionSelection::Greedy => (argmax(&out[SCHEDULE_HEAD]), argmax(&out[ALTITUDE_HEAD])),
            ActionSelection::Sample => (
                categorical_sample(&out[SCHEDULE_HEAD], &mut self.rng).0,
                categorical_sample(&out[ALTITUDE_HEAD], &mut self.rng).0,
            ),
        };
        Action::new(s, AltitudeMove::from_index(a).expect("three altitude logits"))
    }
}

/// Writes `iteration, samples, mean_reward, esa, clip_fraction, approx_kl, policy_loss, value_loss, entropy`.
pub fn write_metrics_csv<W: std::io::Write>(rows: &[IterationMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "iteration",
        "samples",
        "mean_reward",
        "esa",
        "clip_fraction",
        "approx_kl",
        "policy_loss",
        "value_loss",
        "entropy",
    ])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.samples.to_string(),
            r.mean_reward.to_string(),
            r.esa.to_string(),
            r.clip_fraction.to_string(),
            r.approx_kl.to_string(),
            r.policy_loss.to_string(),
            r.value_loss.to_string(),
            r.entropy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
