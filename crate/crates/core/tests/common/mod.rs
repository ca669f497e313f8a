//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::sync::Arc;

use aris_aoi::channel::{db_to_linear, dbm_to_watts, linear_to_db, ChannelParams, Position3};
use aris_aoi::env::{Action, ActivationSpec, AerialEnv, AltitudeMove, NetworkConfig};
use aris_aoi::harness::{evaluate_policy, Agent};
use aris_aoi::nn::PolicyParams;
use aris_aoi::par::Exec;
use aris_aoi::ppo::{batch_objective, ActionSelection, ObjectiveWeights, PpoConfig, Trainer, Trajectory};
use aris_aoi::seeding;
use rand::Rng;

/// |a − b| / max(|a|, |b|, floor). The floor keeps round-off on near-zero
/// components from dominating.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

/// Max relative error between `backward` and central differences of
/// L(θ) = Σ_heads ⟨c_h, out_h(θ)⟩.
pub fn network_gradcheck(params: &PolicyParams, features: &[f64], coeffs: &[Vec<f64>]) -> f64 {
    let loss = |p: &PolicyParams| -> f64 {
        let out = p.forward(features).unwrap();
        out.iter().zip(coeffs).map(|(o, c)| o.iter().zip(c).map(|(x, y)| x * y).sum::<f64>()).sum()
    };
    let analytic = params.backward(features, coeffs).unwrap();
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let orig = p.flat()[k];
        p.flat_mut()[k] = orig + FD_STEP;
        let fp = loss(&p);
        p.flat_mut()[k] = orig - FD_STEP;
        let fm = loss(&p);
        p.flat_mut()[k] = orig;
        worst = worst.max(rel_err(analytic[k], (fp - fm) / (2.0 * FD_STEP), REL_FLOOR));
    }
    worst
}

/// Max relative error of the composite PPO objective gradient on `traj`.
pub fn composite_gradcheck(params: &PolicyParams, traj: &Trajectory, adv: &[f64], w: &ObjectiveWeights) -> f64 {
    let idx: Vec<usize> = (0..traj.len()).collect();
    let mut grads = vec![0.0; params.len()];
    batch_objective(params, traj, adv, &idx, w, Some(&mut grads)).unwrap();
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let orig = p.flat()[k];
        p.flat_mut()[k] = orig + FD_STEP;
        let fp = batch_objective(&p, traj, adv, &idx, w, None).unwrap().objective;
        p.flat_mut()[k] = orig - FD_STEP;
        let fm = batch_objective(&p, traj, adv, &idx, w, None).unwrap().objective;
        p.flat_mut()[k] = orig;
        worst = worst.max(rel_err(grads[k], (fp - fm) / (2.0 * FD_STEP), REL_FLOOR));
    }
    worst
}

/// A hand-built batch whose old log-probs put ratios on both sides of the
/// clip interval (but never on its edges).
pub fn synthetic_batch(params: &PolicyParams, m: usize, n: usize, seed: u64) -> Trajectory {
    let mut rng = seeding::rng(seed);
    let mut t = Trajectory::default();
    let offsets = [0.05, -0.4, 0.6, -0.1, 0.3, -0.02];
    for i in 0..n {
        let f: Vec<f64> = (0..2 * m + 1).map(|_| rng.gen_range(0.0..1.0)).collect();
        let out = params.forward(&f).unwrap();
        let s = rng.gen_range(0..m);
        let a = rng.gen_range(0..3);
        let lp = aris_aoi::nn::log_softmax(&out[0])[s] + aris_aoi::nn::log_softmax(&out[1])[a];
        t.features.push(f);
        t.schedule.push(s);
        t.altitude.push(a);
        t.log_probs.push(lp + offsets[i % offsets.len()]);
        t.rewards.push(-rng.gen_range(1.0..5.0));
        t.values.push(out[2][0]);
        t.dones.push(false);
        t.advantages.push(if i % 2 == 0 { rng.gen_range(0.3..2.0) } else { -rng.gen_range(0.3..2.0) });
        t.returns.push(rng.gen_range(-3.0..0.0));
    }
    t
}

fn channel(f: usize, threshold: f64) -> ChannelParams {
    ChannelParams {
        gamma0: db_to_linear(-20.0),
        eta: 2.3,
        k1: db_to_linear(8.0),
        k2: db_to_linear(8.0),
        tx_power: dbm_to_watts(20.0),
        noise_power: dbm_to_watts(-110.0),
        num_elements: f,
        snr_threshold: threshold,
    }
}

/// Flat test geometry: BS at (2000, 500, 25), UAV over (250, 250), altitude 10–200 m.
pub fn network(devices: Vec<(f64, f64)>, f: usize, threshold_db: f64, activation: ActivationSpec, horizon: usize) -> NetworkConfig {
    NetworkConfig {
        devices: devices.into_iter().map(|(x, y)| Position3::ground(x, y)).collect(),
        bs: Position3::new(2000.0, 500.0, 25.0),
        uav_xy: (250.0, 250.0),
        channel: ChannelParams {
            gamma0: db_to_linear(-20.0),
            eta: 2.3,
            k1: db_to_linear(8.0),
            k2: db_to_linear(8.0),
            tx_power: dbm_to_watts(20.0),
            noise_power: dbm_to_watts(-110.0),
            num_elements: f,
            snr_threshold: db_to_linear(threshold_db),
        },
        h_min: 10.0,
        h_max: 200.0,
        h_start: 100.0,
        d_max: 10.0,
        horizon,
        activation,
        seed: 0,
        violation_penalty: 1.0,
        snr_feature_cap: 10.0,
        redraw_los_per_slot: false,
    }
}

/// Straight-line AoI/altitude/reward model: the aligned SNR from its closed
/// form, delivery iff scheduled ∧ active ∧ SNR ≥ threshold, moves cancelled
/// when they leave [h_min, h_max].
pub struct Oracle<'a> {
    pub cfg: &'a NetworkConfig,
    pub aoi: Vec<u32>,
    pub altitude: f64,
}

impl<'a> Oracle<'a> {
    pub fn snr(&self, i: usize) -> f64 {
        let c = &self.cfg.channel;
        let d = &self.cfg.devices[i];
        let (ux, uy) = self.cfg.uav_xy;
        let h = self.altitude;
        let d_dev = ((d.x - ux).powi(2) + (d.y - uy).powi(2) + h * h).sqrt();
        let b = &self.cfg.bs;
        let d_bs = ((b.x - ux).powi(2) + (b.y - uy).powi(2) + (b.z - h).powi(2)).sqrt();
        let f = c.num_elements as f64;
        c.tx_power * c.gamma0.powi(2) * f * f * c.k1 * c.k2 / ((c.k1 + 1.0) * (c.k2 + 1.0))
            * d_dev.powf(-c.eta)
            * d_bs.powf(-c.eta)
            / c.noise_power
    }

    pub fn step(&mut self, schedule: usize, active: &[bool], mv: AltitudeMove) -> (f64, bool) {
        let ok = active[schedule] && self.snr(schedule) >= self.cfg.channel.snr_threshold;
        for i in 0..self.aoi.len() {
            self.aoi[i] = if ok && i == schedule { 1 } else { self.aoi[i] + 1 };
        }
        let next = self.altitude
            + match mv {
                AltitudeMove::Up => self.cfg.d_max,
                AltitudeMove::Down => -self.cfg.d_max,
                AltitudeMove::Hover => 0.0,
            };
        let violated = next < self.cfg.h_min - 1e-9 || next > self.cfg.h_max + 1e-9;
        if !violated {
            self.altitude = next;
        }
        let mut r = -(self.aoi.iter().map(|&a| a as f64).sum::<f64>()) / self.aoi.len() as f64;
        if violated {
            r -= self.cfg.violation_penalty;
        }
        (r, ok)
    }
}

/// Drives `episodes` random networks with random actions through both the
/// environment and [`Oracle`]; returns (steps, deliveries) or the first
/// disagreement.
pub fn oracle_comparison(seed: u64, episodes: usize, horizon: usize) -> Result<(usize, usize), String> {
    let mut rng = seeding::rng(seed);
    let mut steps = 0usize;
    let mut deliveries = 0usize;
    for _ in 0..episodes {
        let m = rng.gen_range(1..=5);
        let devices: Vec<(f64, f64)> = (0..m).map(|_| (rng.gen_range(100.0..400.0), rng.gen_range(100.0..400.0))).collect();
        let trace: Vec<Vec<bool>> = (0..m).map(|_| (0..horizon).map(|_| rng.gen_bool(0.6)).collect()).collect();
        let threshold_db = rng.gen_range(-15.0..25.0);
        let cfg = network(devices, 64, threshold_db, ActivationSpec::FixedTrace { trace: trace.clone() }, horizon);
        let mut env = AerialEnv::new(Arc::new(cfg.clone())).unwrap();
        env.reset(rng.gen());
        let mut oracle = Oracle { cfg: &cfg, aoi: vec![0; m], altitude: cfg.h_start };
        for n in 0..horizon {
            let a = Action::new(rng.gen_range(0..m), AltitudeMove::ALL[rng.gen_range(0..3)]);
            let active: Vec<bool> = trace.iter().map(|row| row[n]).collect();
            let out = env.step(a).unwrap();
            let (r, ok) = oracle.step(a.schedule, &active, a.altitude_move);
            let same = out.next_state.aoi == oracle.aoi
                && out.delivered == ok
                && out.reward == r
                && (out.next_state.altitude - oracle.altitude).abs() < 1e-9;
            if !same {
                return Err(format!("step {steps}: env {:?}/{} vs oracle {:?}/{r}", out.next_state.aoi, out.reward, oracle.aoi));
            }
            deliveries += ok as usize;
            steps += 1;
        }
    }
    Ok((steps, deliveries))
}

/// Two devices under a UAV confined to 10–50 m. Device 0 sits directly
/// below; device 1 is 150 m off-axis. With `altitude_gated`, the threshold
/// lies between device 1's SNR at 20 m and at 30 m, so device 1 is only
/// reachable at 10–20 m. Otherwise every delivery succeeds.
pub fn tiny_network(trace: Vec<Vec<bool>>, altitude_gated: bool) -> NetworkConfig {
    let horizon = trace[0].len();
    let mut cfg = NetworkConfig {
        devices: vec![Position3::ground(250.0, 250.0), Position3::ground(400.0, 250.0)],
        bs: Position3::new(2000.0, 500.0, 25.0),
        uav_xy: (250.0, 250.0),
        channel: channel(64, 1e-30),
        h_min: 10.0,
        h_max: 50.0,
        h_start: 30.0,
        d_max: 10.0,
        horizon,
        activation: ActivationSpec::FixedTrace { trace },
        seed: 0,
        violation_penalty: 1.0,
        snr_feature_cap: 10.0,
        redraw_los_per_slot: false,
    };
    if altitude_gated {
        let env = AerialEnv::new(Arc::new(cfg.clone())).unwrap();
        let s20 = env.aligned_snrs_at(20.0)[1];
        let s30 = env.aligned_snrs_at(30.0)[1];
        cfg.channel.snr_threshold = (s20 * s30).sqrt();
        let s0 = env.aligned_snrs_at(50.0)[0];
        assert!(s0 > cfg.channel.snr_threshold, "device 0 must stay reachable");
        assert!(linear_to_db(s20 / s30) > 0.0);
    }
    cfg
}

fn bits(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '1').collect()
}

/// The fixed-trace instances (M = 2, N ≤ 8) used for exactness checks.
pub fn tiny_instances() -> Vec<(String, NetworkConfig)> {
    let mut rng = seeding::rng(2024);
    let random = |n: usize, rng: &mut seeding::Rng| -> Vec<Vec<bool>> {
        (0..2).map(|_| (0..n).map(|_| rng.gen_bool(0.5)).collect()).collect()
    };
    vec![
        ("alternating".into(), tiny_network(vec![bits("10101010"), bits("01010101")], false)),
        ("steady_and_sparse".into(), tiny_network(vec![bits("11111111"), bits("10010010")], false)),
        ("both_always_gated".into(), tiny_network(vec![bits("1111111"), bits("1111111")], true)),
        ("blocks_gated".into(), tiny_network(vec![bits("11110000"), bits("00001111")], true)),
        ("random_open".into(), tiny_network(random(6, &mut rng), false)),
        ("random_gated".into(), tiny_network(random(8, &mut rng), true)),
    ]
}

/// Minimum Σ_n Σ_i A_i[n] over every action sequence, by exhaustive search.
pub fn brute_force_total_aoi(cfg: &NetworkConfig, episode_seed: u64) -> u64 {
    fn dfs(env: &AerialEnv, acc: u64, best: &mut u64) {
        let m = env.config().num_devices();
        for s in 0..m {
            for mv in AltitudeMove::ALL {
                let mut child = env.clone();
                let out = child.step(Action::new(s, mv)).unwrap();
                let total = acc + out.next_state.aoi.iter().map(|&a| a as u64).sum::<u64>();
                if out.done {
                    *best = (*best).min(total);
                } else {
                    dfs(&child, total, best);
                }
            }
        }
    }
    let mut env = AerialEnv::new(Arc::new(cfg.clone())).unwrap();
    env.reset(episode_seed);
    let mut best = u64::MAX;
    dfs(&env, 0, &mut best);
    best
}

/// First iteration (1-based) after which the evaluated ESA is within
/// `tolerance` of `target`, or `None` within `max_iterations`.
pub fn iterations_to_reach(
    cfg: &NetworkConfig,
    ppo: &PpoConfig,
    seed: u64,
    target: f64,
    tolerance: f64,
    max_iterations: usize,
    eval_episodes: usize,
) -> Option<usize> {
    let net = Arc::new(cfg.clone());
    let mut trainer = Trainer::new(Arc::clone(&net), ppo.clone(), seed).unwrap().with_exec(Exec::Sequential);
    for it in 1..=max_iterations {
        trainer.iterate().unwrap();
        let agent = Agent::Ppo(Arc::new(trainer.params.clone()), ActionSelection::default());
        let ev = evaluate_policy(&agent, Arc::clone(&net), eval_episodes, seed, Exec::Sequential).unwrap();
        if ev.mean_esa <= target * (1.0 + tolerance) {
            return Some(it);
        }
    }
    None
}

/// One always-active device that clears the threshold at every altitude,
/// in a 20 m corridor where random moves are often cancelled.
pub fn trivial_network(horizon: usize) -> NetworkConfig {
    NetworkConfig {
        devices: vec![Position3::ground(250.0, 250.0)],
        bs: Position3::new(2000.0, 500.0, 25.0),
        uav_xy: (250.0, 250.0),
        channel: channel(16, 1e-30),
        h_min: 10.0,
        h_max: 30.0,
        h_start: 20.0,
        d_max: 10.0,
        horizon,
        activation: ActivationSpec::IidBernoulli { probs: vec![1.0] },
        seed: 0,
        violation_penalty: 1.0,
        snr_feature_cap: 10.0,
        redraw_los_per_slot: false,
    }
}
