//! Exact backward induction over (slot, altitude offset, capped AoI vector)
//! for a fixed activation trace.

use std::sync::Arc;

use super::Policy;
use crate::env::{ActivationSpec, AerialEnv, Action, AltitudeMove, NetworkConfig};
use crate::{Error, Result};

pub const DEFAULT_STATE_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub optimal_esa: f64,
    /// Σ_n Σ_i A_i[n] along the optimal plan.
    pub total_aoi: u64,
    pub actions: Vec<Action>,
    pub states: u64,
}

/// Value table of one slot.
struct Layer {
    k_lo: i64,
    k_hi: i64,
    /// AoI values at this slot lie in `0..base`.
    base: usize,
    values: Vec<u64>,
}

impl Layer {
    fn index(&self, k: i64, aoi: &[u32]) -> usize {
        let mut idx = (k - self.k_lo) as usize;
        for &a in aoi {
            idx = idx * self.base + a as usize;
        }
        idx
    }

    fn decode(&self, mut idx: usize, aoi: &mut [u32]) -> i64 {
        for a in aoi.iter_mut().rev() {
            *a = (idx % self.base) as u32;
            idx /= self.base;
        }
        self.k_lo + idx as i64
    }
}

struct Problem {
    m: usize,
    cap: u32,
    below: i64,
    above: i64,
    /// `feasible[k + below][i]`
    feasible: Vec<Vec<bool>>,
    /// `active[i][n]`
    active: Vec<Vec<bool>>,
    moves: [AltitudeMove; 3],
}

impl Problem {
    fn layer_shape(&self, n: usize) -> (i64, i64, usize) {
        let reach = n as i64;
        let base = (n as u32).min(self.cap) as usize + 1;
        ((-reach).max(-self.below), reach.min(self.above), base)
    }

    fn layer_size(&self, n: usize) -> u64 {
        let (lo, hi, base) = self.layer_shape(n);
        (hi - lo + 1) as u64 * (base as u64).pow(self.m as u32)
    }

    /// Applies one action; returns (next offset, next AoI, slot cost).
    fn transition(&self, n: usize, k: i64, aoi: &[u32], action: Action, next: &mut [u32]) -> (i64, u64) {
        let i = action.schedule;
        let delivered = self.active[i][n] && self.feasible[(k + self.below) as usize][i];
        let mut cost = 0u64;
        for (j, (a, b)) in aoi.iter().zip(next.iter_mut()).enumerate() {
            *b = if delivered && j == i { 1 } else { (a + 1).min(self.cap) };
            cost += *b as u64;
        }
        let kk = k + action.altitude_move.steps();
        let k_next = if kk < -self.below || kk > self.above { k } else { kk };
        (k_next, cost)
    }

    fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        (0..self.m).flat_map(move |i| self.moves.iter().map(move |&mv| Action::new(i, mv)))
    }
}

/// Minimum ESA on a fixed-trace instance, with one optimal action sequence.
///
/// AoI is capped at `min(horizon, aoi_cap)` inside the state; the result is
/// exact whenever `aoi_cap >= horizon`. Feasibility of each (altitude,
/// device) pair is read from an environment reset with `episode_seed`.
pub fn dp_oracle(config: &NetworkConfig, aoi_cap: u32, episode_seed: u64, state_budget: u64) -> Result<DpSolution> {
    let active = match &config.activation {
        ActivationSpec::FixedTrace { trace } => trace.clone(),
        ActivationSpec::IidBernoulli { .. } => {
            return Err(Error::config("network.activation", "the DP oracle needs a fixed activation trace"))
        }
    };
    let mut env = AerialEnv::new(Arc::new(config.clone()))?;
    env.reset(episode_seed);

    let below = ((config.h_start - config.h_min) / config.d_max + 1e-9).floor() as i64;
    let above = ((config.h_max - config.h_start) / config.d_max + 1e-9).floor() as i64;
    let th = config.channel.snr_threshold;
    let feasible = (-below..=above)
        .map(|k| {
            env.aligned_snrs_at(config.altitude_at_offset(k))
                .into_iter()
                .map(|s| s >= th)
                .collect()
        })
        .collect();
    let horizon = config.horizon;
    let problem = Problem {
        m: config.num_devices(),
        cap: aoi_cap.min(horizon as u32).max(1),
        below,
        above,
        feasible,
        active,
        moves: [AltitudeMove::Hover, AltitudeMove::Down, AltitudeMove::Up],
    };

    let states: u64 = (0..=horizon).map(|n| problem.layer_size(n)).fold(0u64, u64::saturating_add);
    if states > state_budget {
        return Err(Error::StateBudget { states, budget: state_budget });
    }

    let mut layers: Vec<Layer> = (0..=horizon)
        .map(|n| {
            let (k_lo, k_hi, base) = problem.layer_shape(n);
            Layer { k_lo, k_hi, base, values: Vec::new() }
        })
        .collect();
    let last = &mut layers[horizon];
    last.values = vec![0; problem.layer_size(horizon) as usize];

    let m = problem.m;
    let mut aoi = vec![0u32; m];
    let mut next = vec![0u32; m];
    for n in (0..horizon).rev() {
        let (head, tail) = layers.split_at_mut(n + 1);
        let cur = &mut head[n];
        let nxt = &tail[0];
        let size = problem.layer_size(n) as usize;
        let mut values = vec![u64::MAX; size];
        for (idx, v) in values.iter_mut().enumerate() {
            let k = cur.decode(idx, &mut aoi);
            debug_assert!(k <= cur.k_hi);
            for action in problem.actions() {
                let (k2, cost) = problem.transition(n, k, &aoi, action, &mut next);
                let total = cost + nxt.values[nxt.index(k2, &next)];
                if total < *v {
                    *v = total;
                }
            }
        }
        cur.values = values;
    }

    // forward pass to recover one optimal plan, first minimiser wins
    let mut k = 0i64;
    aoi.iter_mut().for_each(|a| *a = 0);
    let total_aoi = layers[0].values[layers[0].index(0, &aoi)];
    let mut actions = Vec::with_capacity(horizon);
    for n in 0..horizon {
        let target = layers[n].values[layers[n].index(k, &aoi)];
        let nxt = &layers[n + 1];
        let mut chosen = None;
        for action in problem.actions() {
            let (k2, cost) = problem.transition(n, k, &aoi, action, &mut next);
            if cost + nxt.values[nxt.index(k2, &next)] == target {
                chosen = Some((action, k2, next.clone()));
                break;
            }
        }
        let (action, k2, a2) = chosen.expect("backward pass produced a reachable minimiser");
        actions.push(action);
        k = k2;
        aoi.copy_from_slice(&a2);
    }

    Ok(DpSolution {
        optimal_esa: total_aoi as f64 / (horizon * m) as f64,
        total_aoi,
        actions,
        states,
    })
}

/// Replays a fixed action sequence, hovering on device 0 once it runs out.
#[derive(Debug, Clone)]
pub struct PlanPolicy {
    actions: Arc<Vec<Action>>,
    cursor: usize,
}

impl PlanPolicy {
    pub fn new(actions: Arc<Vec<Action>>) -> Self {
        Self { actions, cursor: 0 }
    }
}

impl Policy for PlanPolicy {
    fn begin_episode(&mut self, _env: &AerialEnv) {
        self.cursor = 0;
    }

    fn act(&mut self, _env: &AerialEnv) -> Action {
        let a = self
            .actions
            .get(self.cursor)
            .copied()
            .unwrap_or(Action::new(0, AltitudeMove::Hover));
        self.cursor += 1;
        a
    }
}
