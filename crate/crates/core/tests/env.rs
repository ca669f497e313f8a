mod common;

use std::sync::Arc;

use aris_aoi::env::{esa, observe, Action, ActivationSpec, AerialEnv, AltitudeMove, NetworkConfig};
use common::network;
use proptest::prelude::*;

#[test]
fn aoi_recurrence_matches_oracle_over_many_random_steps() {
    let (steps, deliveries) = common::oracle_comparison(11, 1000, 100).unwrap();
    assert_eq!(steps, 100_000);
    assert!(deliveries > 10_000 && deliveries < 90_000, "both branches exercised: {deliveries}");
}

fn random_config() -> impl Strategy<Value = (NetworkConfig, u64, Vec<(usize, usize)>)> {
    (1usize..5, any::<u64>(), -10.0f64..20.0).prop_flat_map(|(m, seed, th)| {
        let devs = prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), m);
        let probs = prop::collection::vec(0.0f64..=1.0, m);
        let acts = prop::collection::vec((0..m, 0usize..3), 60);
        (devs, probs, acts).prop_map(move |(d, p, a)| {
            (network(d, 64, th, ActivationSpec::IidBernoulli { probs: p }, 60), seed, a)
        })
    })
}

fn run(cfg: &NetworkConfig, seed: u64, acts: &[(usize, usize)]) -> Vec<(Vec<u32>, f64, f64, bool)> {
    let mut env = AerialEnv::new(Arc::new(cfg.clone())).unwrap();
    env.reset(seed);
    acts.iter()
        .map(|&(s, a)| {
            let o = env.step(Action::new(s, AltitudeMove::from_index(a).unwrap())).unwrap();
            (o.next_state.aoi, o.next_state.altitude, o.reward, o.altitude_violation)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn altitude_stays_in_bounds_and_moves_at_most_d_max((cfg, seed, acts) in random_config()) {
        let mut prev = cfg.h_start;
        for (_, h, _, _) in run(&cfg, seed, &acts) {
            prop_assert!(h >= cfg.h_min - 1e-9 && h <= cfg.h_max + 1e-9);
            prop_assert!((h - prev).abs() <= cfg.d_max + 1e-9);
            prev = h;
        }
    }

    #[test]
    fn identical_seed_and_actions_reproduce_the_episode((cfg, seed, acts) in random_config()) {
        prop_assert_eq!(run(&cfg, seed, &acts), run(&cfg, seed, &acts));
    }

    #[test]
    fn state_invariants_hold((cfg, seed, acts) in random_config()) {
        let mut env = AerialEnv::new(Arc::new(cfg.clone())).unwrap();
        env.reset(seed);
        for &(s, a) in &acts {
            let o = env.step(Action::new(s, AltitudeMove::from_index(a).unwrap())).unwrap();
            let st = &o.next_state;
            prop_assert!(st.aoi.iter().all(|&x| x >= 1 && x as usize <= st.slot));
            prop_assert!(st.aligned_snr.iter().all(|&x| x >= 0.0));
            prop_assert!(observe(st, &cfg).iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert_eq!(observe(st, &cfg).len(), 2 * cfg.num_devices() + 1);
        }
        prop_assert!(env.is_done());
    }

    #[test]
    fn reward_average_equals_esa_without_violations((cfg, seed, acts) in random_config()) {
        // hover only, so no altitude penalty can occur
        let hover: Vec<(usize, usize)> = acts.iter().map(|&(s, _)| (s, AltitudeMove::Hover.index())).collect();
        let steps = run(&cfg, seed, &hover);
        let aoi: Vec<Vec<u32>> = steps.iter().map(|s| s.0.clone()).collect();
        let mean_reward: f64 = steps.iter().map(|s| s.2).sum::<f64>() / steps.len() as f64;
        prop_assert!((-mean_reward - esa(&aoi).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn never_delivering_rewards_fall_by_one_each_slot() {
    let cfg = network(vec![(0.0, 0.0), (500.0, 0.0)], 1, 60.0, ActivationSpec::IidBernoulli { probs: vec![1.0, 1.0] }, 120);
    let mut env = AerialEnv::new(Arc::new(cfg)).unwrap();
    env.reset(3);
    let mut prev = 0.0;
    let mut aoi = Vec::new();
    for n in 0..120 {
        let o = env.step(Action::new(n % 2, AltitudeMove::Hover)).unwrap();
        assert!(!o.delivered);
        assert_eq!(o.reward, prev - 1.0);
        prev = o.reward;
        aoi.push(o.next_state.aoi);
    }
    assert_eq!(esa(&aoi).unwrap(), 60.5);
}

#[test]
fn cancelled_moves_are_penalised() {
    let mut cfg = network(vec![(250.0, 250.0)], 16, 0.0, ActivationSpec::IidBernoulli { probs: vec![0.0] }, 30);
    cfg.h_start = cfg.h_max;
    let mut env = AerialEnv::new(Arc::new(cfg.clone())).unwrap();
    env.reset(0);
    let o = env.step(Action::new(0, AltitudeMove::Up)).unwrap();
    assert!(o.altitude_violation);
    assert_eq!(o.next_state.altitude, cfg.h_max);
    assert_eq!(o.reward, -1.0 - cfg.violation_penalty);
}

#[test]
fn stepping_past_the_horizon_is_an_error() {
    let cfg = network(vec![(250.0, 250.0)], 16, 0.0, ActivationSpec::IidBernoulli { probs: vec![0.5] }, 2);
    let mut env = AerialEnv::new(Arc::new(cfg)).unwrap();
    env.reset(0);
    env.step(Action::new(0, AltitudeMove::Hover)).unwrap();
    assert!(env.step(Action::new(0, AltitudeMove::Hover)).unwrap().done);
    assert!(env.step(Action::new(0, AltitudeMove::Hover)).is_err());
}
