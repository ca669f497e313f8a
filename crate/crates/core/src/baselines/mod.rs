//! Reference policies: random walk, hovering-greedy and an exact DP oracle.

mod dp;

pub use dp::{dp_oracle, DpSolution, PlanPolicy, DEFAULT_STATE_BUDGET};

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::env::{AerialEnv, Action, AltitudeMove, EnvState, NetworkConfig};
use crate::seeding::{self, Rng};
use crate::Error;

/// Anything that picks one action per slot.
pub trait Policy: Send {
    /// Called after every `reset`, before the first `act`.
    fn begin_episode(&mut self, _env: &AerialEnv) {}

    fn act(&mut self, env: &AerialEnv) -> Action;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    RandomWalk,
    HoveringGreedy,
    DpOracle,
    TrainedPpo,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RandomWalk => "random_walk",
            PolicyKind::HoveringGreedy => "hovering_greedy",
            PolicyKind::DpOracle => "dp_oracle",
            PolicyKind::TrainedPpo => "trained_ppo",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_walk" => Ok(PolicyKind::RandomWalk),
            "hovering_greedy" => Ok(PolicyKind::HoveringGreedy),
            "dp_oracle" => Ok(PolicyKind::DpOracle),
            "trained_ppo" | "ppo" => Ok(PolicyKind::TrainedPpo),
            other => Err(Error::config("policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// Uniform device and uniform altitude move.
pub fn random_walk_policy(state: &EnvState, rng: &mut Rng) -> Action {
    let schedule = rng.gen_range(0..state.aoi.len());
    let mv = AltitudeMove::ALL[rng.gen_range(0..3)];
    Action::new(schedule, mv)
}

#[derive(Debug, Clone)]
pub struct RandomWalk {
    rng: Rng,
}

impl RandomWalk {
    pub fn new(seed: u64) -> Self {
        Self { rng: seeding::rng(seed) }
    }
}

impl Policy for RandomWalk {
    fn act(&mut self, env: &AerialEnv) -> Action {
        random_walk_policy(env.state(), &mut self.rng)
    }
}

/// Grid altitude with the most devices at or above the SNR threshold,
/// lowest altitude on ties.
pub fn greedy_target_altitude(config: &NetworkConfig, snrs_at: impl Fn(f64) -> Vec<f64>) -> f64 {
    let th = config.channel.snr_threshold;
    let mut best = (0usize, config.h_start);
    let mut first = true;
    for h in config.altitude_grid() {
        let count = snrs_at(h).iter().filter(|&&s| s >= th).count();
        if first || count > best.0 {
            best = (count, h);
            first = false;
        }
    }
    best.1
}

/// Move towards `target` by one step per slot and schedule the oldest device
/// among those currently above the SNR threshold (all devices when none is),
/// lowest index on ties.
pub fn hovering_greedy_action(state: &EnvState, target: f64, snr_threshold: f64) -> Action {
    let mv = if state.altitude < target {
        AltitudeMove::Up
    } else if state.altitude > target {
        AltitudeMove::Down
    } else {
        AltitudeMove::Hover
    };
    let any_feasible = state.aligned_snr.iter().any(|&s| s >= snr_threshold);
    let mut best: Option<usize> = None;
    for (i, &a) in state.aoi.iter().enumerate() {
        if any_feasible && state.aligned_snr[i] < snr_threshold {
            continue;
        }
        if best.map_or(true, |b| a > state.aoi[b]) {
            best = Some(i);
        }
    }
    Action::new(best.unwrap_or(0), mv)
}

/// One-shot form: searches the target altitude on every call.
pub fn hovering_greedy_policy(state: &EnvState, env: &AerialEnv) -> Action {
    let cfg = env.config();
    let target = greedy_target_altitude(cfg, |h| env.aligned_snrs_at(h));
    hovering_greedy_action(state, target, cfg.channel.snr_threshold)
}

/// Parks at the best-coverage altitude (searched once per episode) and
/// serves the oldest feasible device.
#[derive(Debug, Clone, Default)]
pub struct HoveringGreedy {
    target: Option<f64>,
}

impl HoveringGreedy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }
}

impl Policy for HoveringGreedy {
    fn begin_episode(&mut self, env: &AerialEnv) {
        self.target = Some(greedy_target_altitude(env.config(), |h| env.aligned_snrs_at(h)));
    }

    fn act(&mut self, env: &AerialEnv) -> Action {
        let target = match self.target {
            Some(t) => t,
            None => {
                self.begin_episode(env);
                self.target.unwrap()
            }
        };
        hovering_greedy_action(env.state(), target, env.config().channel.snr_threshold)
    }
}
