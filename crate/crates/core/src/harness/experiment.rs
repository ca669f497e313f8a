//! Sweep orchestration: one task per (point, seed, policy), evaluated in
//! parallel, logged to `metrics.csv` as rows complete, then aggregated into
//! plot-data CSVs. Completed rows are skipped on re-runs.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::baselines::{dp_oracle, PolicyKind, DEFAULT_STATE_BUDGET};
use crate::env::NetworkConfig;
use crate::par::Exec;
use crate::ppo::{train, write_metrics_csv, ActionSelection, IterationMetrics, PpoConfig};
use crate::stats;
use crate::{Error, Result};

use super::config::{ExperimentSpec, NetworkFile, SweepKind};
use super::evaluate::{eval_episode_seed, evaluate_policy, Agent};

pub const METRICS_FILE: &str = "metrics.csv";
const METRICS_HEADER: [&str; 7] = ["experiment", "policy", "sweep_value", "seed", "esa", "mean_reward", "per_device_ages"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub policy: String,
    pub sweep_value: String,
    pub seed: u64,
    pub esa: f64,
    pub mean_reward: f64,
    pub per_device_ages: Option<Vec<f64>>,
}

impl MetricsRow {
    fn record(&self) -> Vec<String> {
        let ages = self
            .per_device_ages
            .as_ref()
            .map(|a| a.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        vec![
            self.experiment.clone(),
            self.policy.clone(),
            self.sweep_value.clone(),
            self.seed.to_string(),
            format!("{:e}", self.esa),
            format!("{:e}", self.mean_reward),
            ages,
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("metrics row has {} fields", rec.len())));
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|e| Error::Parse(format!("metrics column {i}: {e}")))
        };
        let ages = field(6)?;
        let per_device_ages = if ages.is_empty() {
            None
        } else {
            Some(
                ages.split(';')
                    .map(|s| s.parse().map_err(|e| Error::Parse(format!("per_device_ages: {e}"))))
                    .collect::<Result<Vec<f64>>>()?,
            )
        };
        Ok(Self {
            experiment: field(0)?.to_string(),
            policy: field(1)?.to_string(),
            sweep_value: field(2)?.to_string(),
            seed: field(3)?.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?,
            esa: num(4)?,
            mean_reward: num(5)?,
            per_device_ages,
        })
    }

    fn key(&self) -> (String, String, u64) {
        (self.policy.clone(), self.sweep_value.clone(), self.seed)
    }
}

/// Mean ± std of one (policy, sweep value) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub policy: String,
    pub sweep_value: String,
    pub n: usize,
    pub esa_mean: f64,
    pub esa_std: f64,
    pub mean_reward_mean: f64,
}

/// One network configuration of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub network: NetworkFile,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Number of tasks actually run (excludes rows found on disk).
    pub executed: usize,
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn with_device_count(base: &NetworkFile, m: usize) -> Result<NetworkFile> {
    let mut net = base.clone();
    net.num_devices = m;
    if !net.devices.is_empty() {
        if net.devices.len() < m {
            return Err(Error::config("network.devices", format!("sweep needs {m} devices, file lists {}", net.devices.len())));
        }
        net.devices.truncate(m);
    }
    if !net.activation_probs.is_empty() {
        if net.activation_probs.len() < m {
            return Err(Error::config("network.activation_probs", format!("sweep needs {m} entries")));
        }
        net.activation_probs.truncate(m);
    }
    if !net.activation_trace.is_empty() {
        if net.activation_trace.len() < m {
            return Err(Error::config("network.activation_trace", format!("sweep needs {m} rows")));
        }
        net.activation_trace.truncate(m);
    }
    Ok(net)
}

/// Expands the sweep axis into concrete network files.
pub fn sweep_points(spec: &ExperimentSpec, base: &NetworkFile) -> Result<Vec<SweepPoint>> {
    match spec.sweep {
        SweepKind::Convergence => Ok(vec![SweepPoint { label: "default".into(), network: base.clone() }]),
        SweepKind::NumDevices | SweepKind::PerDeviceAge => spec
            .sweep_values
            .iter()
            .map(|&v| {
                Ok(SweepPoint { label: fmt_num(v), network: with_device_count(base, v as usize)? })
            })
            .collect(),
        SweepKind::NumElementsAndPower => {
            let mut out = Vec::new();
            for &f in &spec.sweep_values {
                for &p in &spec.tx_powers_dbm {
                    let mut net = base.clone();
                    net.num_elements = f as usize;
                    net.tx_power_dbm = p;
                    out.push(SweepPoint { label: format!("F{}_P{}", fmt_num(f), fmt_num(p)), network: net });
                }
            }
            Ok(out)
        }
    }
}

/// Reads an existing metrics log; a missing file yields no rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    r.records().map(|rec| MetricsRow::from_record(&rec?)).collect()
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by (policy, sweep value) in first-seen order.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let k = (r.policy.clone(), r.sweep_value.clone());
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = &groups[&k];
            let esa: Vec<f64> = g.iter().map(|r| r.esa).collect();
            let rew: Vec<f64> = g.iter().map(|r| r.mean_reward).collect();
            AggregateRow {
                policy: k.0,
                sweep_value: k.1,
                n: g.len(),
                esa_mean: stats::mean(&esa),
                esa_std: if g.len() > 1 { stats::std_dev(&esa) } else { 0.0 },
                mean_reward_mean: stats::mean(&rew),
            }
        })
        .collect()
}

fn write_aggregates(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "sweep_value", "n", "esa_mean", "esa_std", "mean_reward_mean"])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.sweep_value.clone(),
            r.n.to_string(),
            format!("{:e}", r.esa_mean),
            format!("{:e}", r.esa_std),
            format!("{:e}", r.mean_reward_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_per_device(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut cells: Vec<((String, String), Vec<Vec<f64>>)> = Vec::new();
    for r in rows {
        let Some(ages) = &r.per_device_ages else { continue };
        let k = (r.policy.clone(), r.sweep_value.clone());
        match cells.iter_mut().find(|(key, _)| *key == k) {
            Some((_, v)) => v.push(ages.clone()),
            None => cells.push((k, vec![ages.clone()])),
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "sweep_value", "device", "age_mean", "age_std"])?;
    for ((policy, value), runs) in cells {
        let m = runs.iter().map(Vec::len).min().unwrap_or(0);
        for i in 0..m {
            let xs: Vec<f64> = runs.iter().map(|a| a[i]).collect();
            let sd = if xs.len() > 1 { stats::std_dev(&xs) } else { 0.0 };
            w.write_record([policy.clone(), value.clone(), i.to_string(), format!("{:e}", stats::mean(&xs)), format!("{sd:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-iteration mean and std across seeds; curves are truncated to the
/// shortest one.
pub fn write_convergence(path: &Path, curves: &[Vec<IterationMetrics>]) -> Result<()> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "samples", "mean_reward_mean", "mean_reward_std", "esa_mean", "esa_std"])?;
    for t in 0..len {
        let rew: Vec<f64> = curves.iter().map(|c| c[t].mean_reward).collect();
        let esa: Vec<f64> = curves.iter().map(|c| c[t].esa).filter(|x| x.is_finite()).collect();
        let sd = |xs: &[f64]| if xs.len() > 1 { stats::std_dev(xs) } else { 0.0 };
        w.write_record([
            curves[0][t].iteration.to_string(),
            curves[0][t].samples.to_string(),
            format!("{:e}", stats::mean(&rew)),
            format!("{:e}", sd(&rew)),
            format!("{:e}", if esa.is_empty() { f64::NAN } else { stats::mean(&esa) }),
            format!("{:e}", sd(&esa)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_curve(path: &Path) -> Result<Vec<IterationMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse("short learning-curve row".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("learning curve: {e}")))
        };
        out.push(IterationMetrics {
            iteration: f(0)? as usize,
            samples: f(1)? as usize,
            mean_reward: f(2)?,
            esa: f(3)?,
            clip_fraction: f(4)?,
            approx_kl: f(5)?,
            policy_loss: f(6)?,
            value_loss: f(7)?,
            entropy: f(8)?,
        });
    }
    Ok(out)
}

struct Task {
    point: usize,
    seed: u64,
    policy: PolicyKind,
}

struct Log {
    writer: csv::Writer<File>,
}

impl Log {
    fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            writer.write_record(METRICS_HEADER)?;
            writer.flush()?;
        }
        Ok(Self { writer })
    }

    fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.writer.write_record(row.record())?;
        self.writer.flush()?;
        Ok(())
    }
}

fn curve_path(dir: &Path, label: &str, seed: u64) -> PathBuf {
    dir.join("curves").join(format!("trained_ppo_{label}_seed{seed}.csv"))
}

fn run_task(
    task: &Task,
    spec: &ExperimentSpec,
    point: &SweepPoint,
    ppo: &PpoConfig,
    dir: &Path,
) -> Result<MetricsRow> {
    let net: Arc<NetworkConfig> = Arc::new(point.network.resolve(task.seed)?);
    let agent = match task.policy {
        PolicyKind::RandomWalk => Agent::RandomWalk,
        PolicyKind::HoveringGreedy => Agent::HoveringGreedy,
        PolicyKind::DpOracle => {
            let cap = net.horizon as u32;
            let sol = dp_oracle(&net, cap, eval_episode_seed(task.seed, 0), DEFAULT_STATE_BUDGET)?;
            Agent::Plan(Arc::new(sol.actions))
        }
        PolicyKind::TrainedPpo => {
            let out = train(Arc::clone(&net), ppo.clone(), task.seed)?;
            let file = File::create(curve_path(dir, &point.label, task.seed))?;
            write_metrics_csv(&out.curve, file)?;
            Agent::Ppo(Arc::new(out.params), ActionSelection::default())
        }
    };
    let ev = evaluate_policy(&agent, net, spec.episodes_per_point, task.seed, Exec::Sequential)?;
    Ok(MetricsRow {
        experiment: spec.name.clone(),
        policy: task.policy.name().to_string(),
        sweep_value: point.label.clone(),
        seed: task.seed,
        esa: ev.mean_esa,
        mean_reward: ev.mean_reward,
        per_device_ages: (spec.sweep == SweepKind::PerDeviceAge).then_some(ev.per_device_age),
    })
}

/// Runs every missing (policy, sweep value, seed) cell of `spec` under
/// `spec.output_dir/spec.name`, then rewrites the log in canonical order and
/// emits the plot files. Rows finished before a failure stay on disk.
pub fn run_experiment(spec: &ExperimentSpec, network: &NetworkFile, ppo: &PpoConfig, exec: Exec) -> Result<ExperimentOutput> {
    let dir = spec.output_dir.join(&spec.name);
    fs::create_dir_all(dir.join("curves"))?;
    let points = sweep_points(spec, network)?;
    let metrics_path = dir.join(METRICS_FILE);
    let existing = read_metrics(&metrics_path)?;
    let done: HashSet<(String, String, u64)> = existing.iter().map(MetricsRow::key).collect();

    let mut tasks = Vec::new();
    for (pi, p) in points.iter().enumerate() {
        for &seed in &spec.seeds {
            for &policy in &spec.policies {
                if !done.contains(&(policy.name().to_string(), p.label.clone(), seed)) {
                    tasks.push(Task { point: pi, seed, policy });
                }
            }
        }
    }
    let executed = tasks.len();
    let log = Mutex::new(Log::open(&metrics_path)?);
    let results = exec.map(tasks, |t| {
        let row = run_task(&t, spec, &points[t.point], ppo, &dir)?;
        log.lock().expect("metrics log poisoned").append(&row)?;
        Ok(row)
    });
    drop(log);
    if let Some(e) = results.into_iter().find_map(|r: Result<MetricsRow>| r.err()) {
        return Err(e);
    }

    let mut rows = read_metrics(&metrics_path)?;
    let rank = |r: &MetricsRow| {
        let pol = spec.policies.iter().position(|p| p.name() == r.policy).unwrap_or(usize::MAX);
        let pt = points.iter().position(|p| p.label == r.sweep_value).unwrap_or(usize::MAX);
        (pol, pt, r.seed)
    };
    rows.sort_by_key(|r| rank(r));
    rows.dedup_by_key(|r| r.key());
    write_metrics(&metrics_path, &rows)?;

    let aggregates = aggregate(&rows);
    write_aggregates(&dir.join(format!("plot_{}.csv", spec.sweep.name())), &aggregates)?;
    if spec.sweep == SweepKind::PerDeviceAge {
        write_per_device(&dir.join("plot_per_device_age.csv"), &rows)?;
    }
    if spec.sweep == SweepKind::Convergence && spec.policies.contains(&PolicyKind::TrainedPpo) {
        let curves = spec
            .seeds
            .iter()
            .map(|&s| read_curve(&curve_path(&dir, &points[0].label, s)))
            .collect::<Result<Vec<_>>>()?;
        write_convergence(&dir.join("plot_convergence_curve.csv"), &curves)?;
    }
    Ok(ExperimentOutput { dir, rows, aggregates, executed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub instance_id: String,
    pub optimal_esa: f64,
    pub runtime_ms: f64,
}

/// Solves each named fixed-trace instance and times it.
pub fn run_oracle(instances: &[(String, NetworkConfig)], aoi_cap: u32, exec: Exec) -> Result<Vec<OracleRow>> {
    exec.map(instances.iter().collect(), |(id, net)| {
        let t = Instant::now();
        let sol = dp_oracle(net, aoi_cap, eval_episode_seed(net.seed, 0), DEFAULT_STATE_BUDGET)?;
        Ok(OracleRow { instance_id: id.clone(), optimal_esa: sol.optimal_esa, runtime_ms: t.elapsed().as_secs_f64() * 1e3 })
    })
    .into_iter()
    .collect()
}

pub fn write_oracle_csv(path: &Path, rows: &[OracleRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance_id", "optimal_esa", "runtime_ms"])?;
    for r in rows {
        w.write_record([r.instance_id.clone(), format!("{:e}", r.optimal_esa), format!("{:.3}", r.runtime_ms)])?;
    }
    w.flush()?;
    Ok(())
}
