//! Discrete-time MDP for the aerial-RIS relay.
//!
//! One episode spans `horizon` slots. In each slot the agent picks a device to
//! schedule and an altitude move. The scheduled device delivers a fresh
//! status update when it is active in that slot and its aligned SNR at the
//! current altitude clears the threshold; every other device ages by one.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;

use crate::channel::{self, ChannelParams, PhaseProfile, Position3};
use crate::seeding::{self, Rng};
use crate::{Error, Result};

/// How device activity `G_i[n]` is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationSpec {
    /// `G_i[n] ~ Bernoulli(probs[i])`, i.i.d. over slots.
    IidBernoulli { probs: Vec<f64> },
    /// Fixed `M × N` binary matrix, `trace[i][n]`.
    FixedTrace { trace: Vec<Vec<bool>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub devices: Vec<Position3>,
    pub bs: Position3,
    pub uav_xy: (f64, f64),
    pub channel: ChannelParams,
    pub h_min: f64,
    pub h_max: f64,
    pub h_start: f64,
    /// Maximum altitude change per slot.
    pub d_max: f64,
    pub horizon: usize,
    pub activation: ActivationSpec,
    pub seed: u64,
    pub violation_penalty: f64,
    /// Cap applied to Υ/Υ_th before normalising the SNR features.
    pub snr_feature_cap: f64,
    /// Redraw LoS angles every slot instead of once per episode.
    pub redraw_los_per_slot: bool,
}

impl NetworkConfig {
    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.devices.len();
        if m == 0 {
            return Err(Error::config("network.devices", "at least one device is required"));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if !d.is_valid() {
                return Err(Error::config(format!("network.devices[{i}]"), "coordinates must be finite with z >= 0"));
            }
        }
        if !self.bs.is_valid() {
            return Err(Error::config("network.bs", "coordinates must be finite with z >= 0"));
        }
        if !(self.uav_xy.0.is_finite() && self.uav_xy.1.is_finite()) {
            return Err(Error::config("network.uav_xy", "must be finite"));
        }
        self.channel
            .validate()
            .map_err(|e| match e {
                Error::Config { key, msg } => Error::config(format!("network.{key}"), msg),
                other => other,
            })?;
        if !(self.h_min > 0.0 && self.h_min < self.h_start && self.h_start <= self.h_max) {
            return Err(Error::config(
                "network.h_max",
                format!(
                    "altitude range constraint violated: need 0 < h_min < h_start <= h_max, got h_min={}, h_start={}, h_max={}",
                    self.h_min, self.h_start, self.h_max
                ),
            ));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::config("network.d_max", "per-slot altitude step must be > 0"));
        }
        if self.horizon == 0 {
            return Err(Error::config("network.horizon", "must be >= 1"));
        }
        if !(self.violation_penalty >= 0.0 && self.violation_penalty.is_finite()) {
            return Err(Error::config("network.violation_penalty", "must be finite and >= 0"));
        }
        if !(self.snr_feature_cap > 0.0 && self.snr_feature_cap.is_finite()) {
            return Err(Error::config("network.snr_feature_cap", "must be finite and > 0"));
        }
        match &self.activation {
            ActivationSpec::IidBernoulli { probs } => {
                if probs.len() != m {
                    return Err(Error::config(
                        "network.activation_probs",
                        format!("expected {m} probabilities, got {}", probs.len()),
                    ));
                }
                if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::config("network.activation_probs", format!("{p} is not in [0, 1]")));
                }
            }
            ActivationSpec::FixedTrace { trace } => {
                if trace.len() != m || trace.iter().any(|row| row.len() != self.horizon) {
                    return Err(Error::config(
                        "network.activation_trace",
                        format!("trace must be {m} x {} (devices x slots)", self.horizon),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Altitudes reachable from `h_start` in whole `d_max` steps inside the
    /// allowed range, ascending.
    pub fn altitude_grid(&self) -> Vec<f64> {
        let below = ((self.h_start - self.h_min) / self.d_max + 1e-9).floor() as i64;
        let above = ((self.h_max - self.h_start) / self.d_max + 1e-9).floor() as i64;
        (-below..=above).map(|k| self.altitude_at_offset(k)).collect()
    }

    /// Altitude `k` steps from the start; exact when `k` fits in the grid.
    pub fn altitude_at_offset(&self, k: i64) -> f64 {
        self.h_start + k as f64 * self.d_max
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match &self.activation {
            ActivationSpec::IidBernoulli { probs } => Some(probs),
            ActivationSpec::FixedTrace { .. } => None,
        }
    }
}

/// Fixed LoS angle vectors of one device (ψ towards the device, ω towards the BS).
#[derive(Debug, Clone, PartialEq)]
pub struct LosAngles {
    pub device: Vec<f64>,
    pub bs: Vec<f64>,
}

impl LosAngles {
    pub fn draw(num_elements: usize, rng: &mut Rng) -> Self {
        let mut angle = || channel::wrap_angle(rng.gen_range(0.0..std::f64::consts::TAU));
        let device = (0..num_elements).map(|_| angle()).collect();
        let bs = (0..num_elements).map(|_| angle()).collect();
        Self { device, bs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AltitudeMove {
    Up,
    Down,
    Hover,
}

impl AltitudeMove {
    pub const ALL: [AltitudeMove; 3] = [AltitudeMove::Up, AltitudeMove::Down, AltitudeMove::Hover];

    pub fn index(self) -> usize {
        match self {
            AltitudeMove::Up => 0,
            AltitudeMove::Down => 1,
            AltitudeMove::Hover => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Signed number of `d_max` steps.
    pub fn steps(self) -> i64 {
        match self {
            AltitudeMove::Up => 1,
            AltitudeMove::Down => -1,
            AltitudeMove::Hover => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub schedule: usize,
    pub altitude_move: AltitudeMove,
}

impl Action {
    pub fn new(schedule: usize, altitude_move: AltitudeMove) -> Self {
        Self { schedule, altitude_move }
    }
}

/// The MDP observation: AoI, aligned SNRs and altitude at slot `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub aoi: Vec<u32>,
    pub aligned_snr: Vec<f64>,
    pub altitude: f64,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub delivered: bool,
    pub altitude_violation: bool,
    pub done: bool,
    /// Whether the scheduled device was active this slot.
    pub active: bool,
    /// Aligned SNR of the scheduled device at the decision altitude.
    pub scheduled_snr: f64,
}

/// Υ_i for every device with RIS phases aligned to that device.
pub fn compute_aligned_snrs(altitude: f64, config: &NetworkConfig, los: &[LosAngles]) -> Vec<f64> {
    let ch = &config.channel;
    let d_bs = channel::distance_uav_to_bs(config.bs, config.uav_xy, altitude);
    config
        .devices
        .iter()
        .zip(los)
        .map(|(dev, angles)| {
            let d_dev = channel::distance_device_to_uav(*dev, config.uav_xy, altitude);
            let profile = PhaseProfile::aligned(angles.device.clone(), angles.bs.clone())
                .expect("LoS angle vectors are drawn with matching lengths");
            // a UAV sitting exactly at the BS has no second hop to lose power on
            match channel::cascaded_gain(&profile, d_dev, d_bs.max(f64::MIN_POSITIVE), ch) {
                Ok(g) => channel::snr(g, ch),
                Err(_) => 0.0,
            }
        })
        .collect()
}

/// Normalised `2M + 1` feature vector with every entry in `[0, 1]`.
pub fn observe(state: &EnvState, config: &NetworkConfig) -> Vec<f64> {
    let n = config.horizon as f64;
    let cap = config.snr_feature_cap;
    let th = config.channel.snr_threshold;
    let mut out = Vec::with_capacity(2 * state.aoi.len() + 1);
    out.extend(state.aoi.iter().map(|&a| (a as f64 / n).min(1.0)));
    out.extend(state.aligned_snr.iter().map(|&s| (s / th).min(cap) / cap));
    let span = config.h_max - config.h_min;
    out.push(((state.altitude - config.h_min) / span).clamp(0.0, 1.0));
    out
}

/// Episode-level simulator. Owns its RNG; not shared across threads.
#[derive(Debug, Clone)]
pub struct AerialEnv {
    config: Arc<NetworkConfig>,
    rng: Rng,
    los: Vec<LosAngles>,
    /// `active[n][i]` for the current episode.
    active: Vec<Vec<bool>>,
    state: EnvState,
    altitude_offset: i64,
    done: bool,
    snr_cache: HashMap<i64, Vec<f64>>,
}

impl AerialEnv {
    pub fn new(config: Arc<NetworkConfig>) -> Result<Self> {
        config.validate()?;
        let m = config.num_devices();
        let mut env = Self {
            rng: seeding::rng(config.seed),
            los: Vec::new(),
            active: Vec::new(),
            state: EnvState {
                aoi: vec![0; m],
                aligned_snr: vec![0.0; m],
                altitude: config.h_start,
                slot: 0,
            },
            altitude_offset: 0,
            done: true,
            snr_cache: HashMap::new(),
            config,
        };
        env.reset(env.config.seed);
        Ok(env)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn shared_config(&self) -> Arc<NetworkConfig> {
        Arc::clone(&self.config)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn los_angles(&self) -> &[LosAngles] {
        &self.los
    }

    /// Activation of device `device` at slot `slot` in the current episode.
    pub fn is_active(&self, device: usize, slot: usize) -> bool {
        self.active[slot][device]
    }

    /// Starts a new episode: altitude `h_start`, zero AoI, fresh LoS angles and
    /// activation draws from `episode_seed`.
    pub fn reset(&mut self, episode_seed: u64) -> &EnvState {
        let cfg = Arc::clone(&self.config);
        let m = cfg.num_devices();
        self.rng = seeding::rng(episode_seed);
        self.los = (0..m)
            .map(|_| LosAngles::draw(cfg.channel.num_elements, &mut self.rng))
            .collect();
        self.active = match &cfg.activation {
            ActivationSpec::IidBernoulli { probs } => (0..cfg.horizon)
                .map(|_| probs.iter().map(|&p| self.rng.gen::<f64>() < p).collect())
                .collect(),
            ActivationSpec::FixedTrace { trace } => (0..cfg.horizon)
                .map(|n| trace.iter().map(|row| row[n]).collect())
                .collect(),
        };
        self.snr_cache.clear();
        self.altitude_offset = 0;
        self.done = false;
        self.state = EnvState {
            aoi: vec![0; m],
            aligned_snr: self.aligned_snrs_at_offset(0),
            altitude: cfg.h_start,
            slot: 0,
        };
        &self.state
    }

    fn aligned_snrs_at_offset(&mut self, k: i64) -> Vec<f64> {
        if let Some(v) = self.snr_cache.get(&k) {
            return v.clone();
        }
        let v = compute_aligned_snrs(self.config.altitude_at_offset(k), &self.config, &self.los);
        self.snr_cache.insert(k, v.clone());
        v
    }

    /// Aligned SNRs at an arbitrary altitude under this episode's LoS angles.
    pub fn aligned_snrs_at(&self, altitude: f64) -> Vec<f64> {
        compute_aligned_snrs(altitude, &self.config, &self.los)
    }

    pub fn observe(&self) -> Vec<f64> {
        observe(&self.state, &self.config)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let cfg = Arc::clone(&self.config);
        let m = cfg.num_devices();
        if action.schedule >= m {
            return Err(Error::Domain(format!("schedule index {} out of range for {m} devices", action.schedule)));
        }
        let n = self.state.slot;

        // delivery is decided at the altitude held during this slot
        let active = self.active[n][action.schedule];
        let scheduled_snr = self.state.aligned_snr[action.schedule];
        let delivered = active && scheduled_snr >= cfg.channel.snr_threshold;
        for (i, a) in self.state.aoi.iter_mut().enumerate() {
            *a = if delivered && i == action.schedule { 1 } else { *a + 1 };
        }

        let tentative = self.altitude_offset + action.altitude_move.steps();
        let tentative_alt = cfg.altitude_at_offset(tentative);
        let altitude_violation = tentative_alt < cfg.h_min || tentative_alt > cfg.h_max;
        if !altitude_violation {
            self.altitude_offset = tentative;
        }

        if cfg.redraw_los_per_slot {
            self.los = (0..m)
                .map(|_| LosAngles::draw(cfg.channel.num_elements, &mut self.rng))
                .collect();
            self.snr_cache.clear();
        }

        let aoi_sum: u64 = self.state.aoi.iter().map(|&a| a as u64).sum();
        let mut reward = -(aoi_sum as f64) / m as f64;
        if altitude_violation {
            reward -= cfg.violation_penalty;
        }

        self.state.altitude = cfg.altitude_at_offset(self.altitude_offset);
        self.state.aligned_snr = self.aligned_snrs_at_offset(self.altitude_offset);
        self.state.slot = n + 1;
        self.done = self.state.slot >= cfg.horizon;

        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward,
            delivered,
            altitude_violation,
            done: self.done,
            active,
            scheduled_snr,
        })
    }
}

/// Mean of all recorded AoI entries: (1/NM) Σ_n Σ_i A_i[n].
pub fn esa(aoi_trace: &[Vec<u32>]) -> Result<f64> {
    if aoi_trace.is_empty() {
        return Err(Error::Domain("ESA of an empty trajectory".into()));
    }
    let mut total = 0u64;
    let mut count = 0usize;
    for row in aoi_trace {
        total += row.iter().map(|&a| a as u64).sum::<u64>();
        count += row.len();
    }
    if count == 0 {
        return Err(Error::Domain("ESA over zero devices".into()));
    }
    Ok(total as f64 / count as f64)
}

/// Per-slot record of one episode, for CSV dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub slot: usize,
    pub altitude: f64,
    pub scheduled: usize,
    pub active: bool,
    pub snr_db: f64,
    pub delivered: bool,
    pub aoi: Vec<u32>,
    pub reward: f64,
}

impl TraceRow {
    pub fn from_step(before: &EnvState, action: Action, outcome: &StepOutcome) -> Self {
        Self {
            slot: before.slot,
            altitude: before.altitude,
            scheduled: action.schedule,
            active: outcome.active,
            snr_db: channel::linear_to_db(outcome.scheduled_snr),
            delivered: outcome.delivered,
            aoi: outcome.next_state.aoi.clone(),
            reward: outcome.reward,
        }
    }
}

/// Writes `slot, altitude, scheduled, active, snr_db, delivered, aoi_0..aoi_{M-1}, reward`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let m = rows.first().map_or(0, |r| r.aoi.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["slot", "altitude", "scheduled", "active", "snr_db", "delivered"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..m).map(|i| format!("aoi_{i}")));
    header.push("reward".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.slot.to_string(),
            r.altitude.to_string(),
            r.scheduled.to_string(),
            u8::from(r.active).to_string(),
            r.snr_db.to_string(),
            u8::from(r.delivered).to_string(),
        ];
        rec.extend(r.aoi.iter().map(|a| a.to_string()));
        rec.push(r.reward.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
