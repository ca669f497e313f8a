//! Declarative config file with `[network]`, `[ppo]` and `[experiment]`
//! tables. Units are in the key names (`_db`, `_dbm`, `_m`). Every key is
//! optional; missing keys take the defaults below. Decibel values are
//! converted to linear once, in [`NetworkFile::resolve`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::PolicyKind;
use crate::channel::{db_to_linear, dbm_to_watts, ChannelParams, Position3};
use crate::env::{ActivationSpec, NetworkConfig};
use crate::ppo::PpoConfig;
use crate::seeding::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkFile {
    /// Used when `devices` is empty: devices are placed uniformly at random
    /// in the `area_side_m` square from the network seed.
    pub num_devices: usize,
    pub area_side_m: f64,
    /// Explicit ground positions `[x, y]` in meters.
    pub devices: Vec<[f64; 2]>,
    /// Base station `[x, y, height]` in meters.
    pub bs: [f64; 3],
    pub uav_xy: [f64; 2],
    pub num_elements: usize,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    /// Reference channel gain at 1 m, in dB.
    pub gamma0_db: f64,
    pub path_loss_exponent: f64,
    pub rician_k1_db: f64,
    pub rician_k2_db: f64,
    pub snr_threshold_db: f64,
    pub h_min_m: f64,
    pub h_max_m: f64,
    pub h_start_m: f64,
    /// Maximum altitude change per slot, meters.
    pub d_max_m: f64,
    pub horizon: usize,
    /// `iid_bernoulli` or `fixed_trace`.
    pub activation: String,
    /// Per-device activation probabilities; drawn from U(0, 1) when empty.
    pub activation_probs: Vec<f64>,
    /// Devices × slots matrix of 0/1 for `fixed_trace`.
    pub activation_trace: Vec<Vec<u8>>,
    pub seed: u64,
    pub violation_penalty: f64,
    pub snr_feature_cap: f64,
    pub redraw_los_per_slot: bool,
}

impl Default for NetworkFile {
    fn default() -> Self {
        Self {
            num_devices: 5,
            area_side_m: 500.0,
            devices: Vec::new(),
            bs: [2000.0, 500.0, 25.0],
            uav_xy: [250.0, 250.0],
            num_elements: 128,
            tx_power_dbm: 20.0,
            noise_power_dbm: -110.0,
            gamma0_db: -20.0,
            path_loss_exponent: 2.3,
            rician_k1_db: 8.0,
            rician_k2_db: 8.0,
            snr_threshold_db: 0.0,
            h_min_m: 10.0,
            h_max_m: 1000.0,
            h_start_m: 100.0,
            d_max_m: 10.0,
            horizon: 120,
            activation: "iid_bernoulli".into(),
            activation_probs: Vec::new(),
            activation_trace: Vec::new(),
            seed: 0,
            violation_penalty: 1.0,
            snr_feature_cap: 10.0,
            redraw_los_per_slot: false,
        }
    }
}

impl NetworkFile {
    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            gamma0: db_to_linear(self.gamma0_db),
            eta: self.path_loss_exponent,
            k1: db_to_linear(self.rician_k1_db),
            k2: db_to_linear(self.rician_k2_db),
            tx_power: dbm_to_watts(self.tx_power_dbm),
            noise_power: dbm_to_watts(self.noise_power_dbm),
            num_elements: self.num_elements,
            snr_threshold: db_to_linear(self.snr_threshold_db),
        }
    }

    /// Makes random placement and activation probabilities explicit for
    /// `seed`, so the result resolves identically without the seed.
    pub fn materialize(&self, seed: u64) -> Result<NetworkFile> {
        let mut out = self.clone();
        out.seed = seed;
        let mut rng = seeding::rng(seeding::derive(seed, stream::NETWORK, 0));
        if out.devices.is_empty() {
            if out.num_devices == 0 {
                return Err(Error::config("network.num_devices", "must be >= 1"));
            }
            if !(out.area_side_m > 0.0) {
                return Err(Error::config("network.area_side_m", "must be > 0"));
            }
            let side = out.area_side_m;
            out.devices = (0..out.num_devices)
                .map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)])
                .collect();
        }
        out.num_devices = out.devices.len();
        match out.activation.as_str() {
            "iid_bernoulli" => {
                if out.activation_probs.is_empty() {
                    out.activation_probs = (0..out.devices.len()).map(|_| rng.gen::<f64>()).collect();
                }
            }
            "fixed_trace" => {}
            other => {
                return Err(Error::config(
                    "network.activation",
                    format!("expected `iid_bernoulli` or `fixed_trace`, got `{other}`"),
                ))
            }
        }
        Ok(out)
    }

    /// Linear-unit network for `seed`.
    pub fn resolve(&self, seed: u64) -> Result<NetworkConfig> {
        let f = self.materialize(seed)?;
        let activation = match f.activation.as_str() {
            "iid_bernoulli" => ActivationSpec::IidBernoulli { probs: f.activation_probs.clone() },
            _ => {
                let mut trace = Vec::with_capacity(f.activation_trace.len());
                for (i, row) in f.activation_trace.iter().enumerate() {
                    let mut r = Vec::with_capacity(row.len());
                    for (n, &v) in row.iter().enumerate() {
                        r.push(match v {
                            0 => false,
                            1 => true,
                            _ => {
                                return Err(Error::config(
                                    format!("network.activation_trace[{i}][{n}]"),
                                    "entries must be 0 or 1",
                                ))
                            }
                        });
                    }
                    trace.push(r);
                }
                ActivationSpec::FixedTrace { trace }
            }
        };
        let cfg = NetworkConfig {
            devices: f.devices.iter().map(|d| Position3::ground(d[0], d[1])).collect(),
            bs: Position3::new(f.bs[0], f.bs[1], f.bs[2]),
            uav_xy: (f.uav_xy[0], f.uav_xy[1]),
            channel: f.channel(),
            h_min: f.h_min_m,
            h_max: f.h_max_m,
            h_start: f.h_start_m,
            d_max: f.d_max_m,
            horizon: f.horizon,
            activation,
            seed,
            violation_penalty: f.violation_penalty,
            snr_feature_cap: f.snr_feature_cap,
            redraw_los_per_slot: f.redraw_los_per_slot,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoFile {
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
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    pub num_envs: usize,
}

impl Default for PpoFile {
    fn default() -> Self {
        PpoConfig::default().into()
    }
}

impl From<PpoConfig> for PpoFile {
    fn from(c: PpoConfig) -> Self {
        Self {
            rollout_length: c.rollout_length,
            epochs_per_iter: c.epochs_per_iter,
            minibatch_size: c.minibatch_size,
            clip_epsilon: c.clip_epsilon,
            discount: c.discount,
            gae_lambda: c.gae_lambda,
            value_coef: c.value_coef,
            entropy_coef: c.entropy_coef,
            learning_rate: c.learning_rate,
            total_samples: c.total_samples,
            advantage_normalization: c.advantage_normalization,
            reward_scale: c.reward_scale,
            hidden: c.hidden,
            num_envs: c.num_envs,
        }
    }
}

impl PpoFile {
    pub fn resolve(&self) -> Result<PpoConfig> {
        let c = PpoConfig {
            rollout_length: self.rollout_length,
            epochs_per_iter: self.epochs_per_iter,
            minibatch_size: self.minibatch_size,
            clip_epsilon: self.clip_epsilon,
            discount: self.discount,
            gae_lambda: self.gae_lambda,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            learning_rate: self.learning_rate,
            total_samples: self.total_samples,
            advantage_normalization: self.advantage_normalization,
            reward_scale: self.reward_scale,
            hidden: self.hidden.clone(),
            num_envs: self.num_envs,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Convergence,
    NumDevices,
    PerDeviceAge,
    NumElementsAndPower,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Convergence => "convergence",
            SweepKind::NumDevices => "num_devices",
            SweepKind::PerDeviceAge => "per_device_age",
            SweepKind::NumElementsAndPower => "num_elements_and_power",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: String,
    pub sweep: SweepKind,
    /// Device counts for `num_devices`/`per_device_age`, element counts for
    /// `num_elements_and_power`; ignored by `convergence`.
    pub sweep_values: Vec<f64>,
    /// Transmit powers crossed with `sweep_values` in `num_elements_and_power`.
    pub tx_powers_dbm: Vec<f64>,
    pub episodes_per_point: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<String>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentFile {
    fn default() -> Self {
        Self {
            name: "default".into(),
            sweep: SweepKind::NumDevices,
            sweep_values: vec![3.0, 5.0, 8.0],
            tx_powers_dbm: vec![20.0],
            episodes_per_point: 50,
            seeds: (0..5).collect(),
            policies: vec!["random_walk".into(), "hovering_greedy".into(), "trained_ppo".into()],
            output_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub sweep: SweepKind,
    pub sweep_values: Vec<f64>,
    pub tx_powers_dbm: Vec<f64>,
    pub episodes_per_point: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub output_dir: PathBuf,
}

impl ExperimentFile {
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        if self.sweep != SweepKind::Convergence && self.sweep_values.is_empty() {
            return Err(Error::config("experiment.sweep_values", "must not be empty"));
        }
        if self.sweep == SweepKind::NumElementsAndPower && self.tx_powers_dbm.is_empty() {
            return Err(Error::config("experiment.tx_powers_dbm", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("experiment.seeds", "must not be empty"));
        }
        if self.episodes_per_point == 0 {
            return Err(Error::config("experiment.episodes_per_point", "must be >= 1"));
        }
        let mut seen = BTreeSet::new();
        let mut policies = Vec::new();
        for p in &self.policies {
            let k: PolicyKind = p
                .parse()
                .map_err(|_| Error::config("experiment.policies", format!("unknown policy `{p}`")))?;
            if seen.insert(k) {
                policies.push(k);
            }
        }
        if policies.is_empty() {
            return Err(Error::config("experiment.policies", "must not be empty"));
        }
        if matches!(self.sweep, SweepKind::NumDevices | SweepKind::PerDeviceAge | SweepKind::NumElementsAndPower)
            && self.sweep_values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0))
        {
            return Err(Error::config("experiment.sweep_values", "counts must be positive integers"));
        }
        Ok(ExperimentSpec {
            name: self.name.clone(),
            sweep: self.sweep,
            sweep_values: self.sweep_values.clone(),
            tx_powers_dbm: self.tx_powers_dbm.clone(),
            episodes_per_point: self.episodes_per_point,
            seeds: self.seeds.clone(),
            policies,
            output_dir: self.output_dir.clone(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkFile,
    pub ppo: PpoFile,
    pub experiment: ExperimentFile,
}

/// Everything a run needs, with the file it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub network: NetworkConfig,
    pub ppo: PpoConfig,
    pub experiment: ExperimentSpec,
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<LoadedConfig> {
        Ok(LoadedConfig {
            file: self.clone(),
            network: self.network.resolve(self.network.seed)?,
            ppo: self.ppo.resolve()?,
            experiment: self.experiment.resolve()?,
        })
    }

    /// TOML text with random draws made explicit for the network seed.
    pub fn dump(&self) -> Result<String> {
        let mut out = self.clone();
        out.network = self.network.materialize(self.network.seed)?;
        toml::to_string(&out).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `section.key=value` to a parsed TOML tree.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like KEY=VALUE"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "empty key segment"));
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{k}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<ConfigFile> {
    let mut root: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    ConfigFile::deserialize(toml::Value::Table(root)).map_err(|e| Error::Parse(e.to_string()))
}

/// Reads `path` (or starts from defaults when `None`), applies overrides
/// and resolves every section.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides)?.resolve()
}
