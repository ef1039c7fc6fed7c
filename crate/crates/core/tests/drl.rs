use shardsim::config::{DqnConfig, PpoConfig};
use shardsim::drl::{decode_with_repair, softmax_rows, DqnAgent, DqnStrategy, PpoAgent, PpoStrategy};
use shardsim::env::{encode_state, random_snapshot, virtual_reward_value, Snapshot};
use shardsim::harness::brute_force_oracle;
use shardsim::strategy::ReshardingStrategy;
use shardsim::{new_rng, SimConfig};

fn toy(seed: u64) -> (Snapshot, SimConfig) {
    let mut cfg = SimConfig::default();
    cfg.network.n_total = 4;
    cfg.network.n_min = 2;
    cfg.network.seed = seed;
    cfg.attack.h_dishonest = 1;
    (random_snapshot(&cfg, 2).unwrap(), cfg)
}

fn within(r: f64, opt: f64, tol: f64) -> bool {
    r >= opt - tol * opt.abs()
}

#[test]
fn constant_reward_q_values_regress_to_constant() {
    let c = 0.7;
    let cfg = DqnConfig { epochs: 200, learning_rate: 1e-2, repair_rollouts: false, ..DqnConfig::default() };
    let state = vec![0.2, 0.9, 0.4, 0.0, 1.0, 0.3];
    let mut agent = DqnAgent::new(state.len(), 4, 2, &cfg, &mut new_rng(11, "init"));
    agent.train(&state, |_| c, &mut new_rng(11, "train")).unwrap();
    for q in agent.q_values(&state).unwrap() {
        assert!((q - c).abs() < 0.05, "q {q} vs {c}");
    }
}

#[test]
fn toy_snapshot_dqn_reaches_enumerated_optimum() {
    let mut hits = 0;
    for seed in 0..10 {
        let (snap, cfg) = toy(seed);
        let (_, best) = brute_force_oracle(&snap, &cfg).unwrap();
        let mut s = DqnStrategy::default();
        s.propose(&snap, &cfg, &mut new_rng(seed, "p")).unwrap();
        let q = s.agent().unwrap().q_values(&encode_state(&snap, 2)).unwrap();
        let (a, _) = decode_with_repair(&q, 4, 2, 2);
        if within(virtual_reward_value(&snap, &a, &cfg), best.total, 0.05) {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10");
}

#[test]
fn toy_snapshot_ppo_mode_reaches_enumerated_optimum() {
    let mut hits = 0;
    for seed in 0..10 {
        let (snap, cfg) = toy(seed);
        let (_, best) = brute_force_oracle(&snap, &cfg).unwrap();
        let mut s = PpoStrategy::default();
        s.propose(&snap, &cfg, &mut new_rng(seed, "p")).unwrap();
        let logits = s.agent().unwrap().logits(&encode_state(&snap, 2)).unwrap();
        let (a, _) = decode_with_repair(&logits, 4, 2, 2);
        if within(virtual_reward_value(&snap, &a, &cfg), best.total, 0.05) {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10");
}

#[test]
fn proposals_respect_shard_minimum() {
    let mut cfg = SimConfig::default();
    cfg.network.seed = 4;
    let snap = random_snapshot(&cfg, 1).unwrap();
    for mut s in [Box::new(DqnStrategy::default()) as Box<dyn ReshardingStrategy>, Box::new(PpoStrategy::default())] {
        let p = s.propose(&snap, &cfg, &mut new_rng(4, "p")).unwrap();
        assert!(p.assignment.sizes(2).iter().all(|&k| k >= cfg.network.n_min));
    }
}

#[test]
fn training_curves_improve_on_fixed_snapshot() {
    let mut ok = [0; 2];
    for seed in 0..10 {
        let mut cfg = SimConfig::default();
        cfg.network.n_total = 8;
        cfg.network.seed = seed;
        cfg.attack.h_dishonest = 2;
        let snap = random_snapshot(&cfg, 2).unwrap();
        let mut dqn = DqnStrategy::default();
        dqn.propose(&snap, &cfg, &mut new_rng(seed, "p")).unwrap();
        let mut ppo = PpoStrategy::default();
        ppo.propose(&snap, &cfg, &mut new_rng(seed, "p")).unwrap();
        for (k, log) in [dqn.training_log(), ppo.training_log()].into_iter().enumerate() {
            let (head, tail) = log.unwrap().head_tail_means(10);
            if tail >= head {
                ok[k] += 1;
            }
        }
    }
    assert!(ok.iter().all(|&k| k >= 9), "dqn {}/10, ppo {}/10", ok[0], ok[1]);
}

#[test]
fn training_is_deterministic_for_fixed_seed_and_snapshot() {
    let cfg = SimConfig::default();
    let snap = random_snapshot(&cfg, 1).unwrap();
    let state = encode_state(&snap, 2);
    let run_dqn = || {
        let mut a = DqnAgent::new(state.len(), 16, 2, &DqnConfig { epochs: 10, ..cfg.dqn.clone() }, &mut new_rng(2, "i"));
        a.train(&state, |x| virtual_reward_value(&snap, x, &cfg), &mut new_rng(2, "t")).unwrap();
        serde_json::to_string(&a).unwrap()
    };
    let run_ppo = || {
        let mut a = PpoAgent::new(state.len(), 16, 2, &PpoConfig { epochs: 10, ..cfg.ppo.clone() }, &mut new_rng(2, "i"));
        a.train(&state, |x| virtual_reward_value(&snap, x, &cfg), &mut new_rng(2, "t")).unwrap();
        serde_json::to_string(&a).unwrap()
    };
    assert_eq!(run_dqn(), run_dqn());
    assert_eq!(run_ppo(), run_ppo());
}

#[test]
fn policy_distributions_sum_to_one() {
    let cfg = SimConfig::default();
    let snap = random_snapshot(&cfg, 1).unwrap();
    let state = encode_state(&snap, 2);
    let agent = PpoAgent::new(state.len(), 16, 2, &cfg.ppo, &mut new_rng(0, "i"));
    let p = agent.probabilities(&state).unwrap();
    assert_eq!(p, softmax_rows(&agent.logits(&state).unwrap(), 2));
    for row in p.chunks(2) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
