//! Learned resharding: DQN and PPO over factored per-node actions.
//!
//! An action is a full allocation, encoded as one categorical choice of
//! shard per node, so a network with `N * D` outputs covers the whole
//! action space. Training is single-step: within one call the state (the
//! encoded snapshot) is fixed, the agent proposes allocations, and each
//! proposal's reward arrives immediately.

mod dqn;
pub mod mlp;
mod ppo;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use dqn::{DqnAgent, ReplayBuffer};
pub use mlp::{Mlp, MlpGrads, Sgd};
pub use ppo::{clipped_surrogate, PpoAgent};

use crate::assignment::ShardAssignment;
use crate::config::SimConfig;
use crate::env::{encode_state, virtual_reward_value, Snapshot};
use crate::error::Result;
use crate::rng::DeterministicRng;
use crate::strategy::{Proposal, ReshardingStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_reward: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStat>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_reward,loss\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.mean_reward, e.loss);
        }
        s
    }

    /// Mean of `mean_reward` over the first / last `k` epochs.
    pub fn head_tail_means(&self, k: usize) -> (f64, f64) {
        let m = |s: &[EpochStat]| s.iter().map(|e| e.mean_reward).sum::<f64>() / s.len().max(1) as f64;
        let k = k.min(self.epochs.len());
        (m(&self.epochs[..k]), m(&self.epochs[self.epochs.len() - k..]))
    }
}

/// Result of one training call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub log: TrainingLog,
    /// Highest-reward proposal sampled during training.
    pub best: Option<(ShardAssignment, f64)>,
}

pub(crate) fn track_best(best: &mut Option<(ShardAssignment, f64)>, a: &[usize], r: f64) {
    if best.as_ref().is_none_or(|(_, br)| r > *br) {
        *best = Some((ShardAssignment(a.to_vec()), r));
    }
}

/// Argmax per node over `scores` laid out as `[node][shard]`; ties go to the
/// lower shard index.
pub fn greedy(scores: &[f64], n: usize, d: usize) -> ShardAssignment {
    ShardAssignment(
        (0..n)
            .map(|i| {
                let row = &scores[i * d..(i + 1) * d];
                (0..d).fold(0, |best, x| if row[x] > row[best] { x } else { best })
            })
            .collect(),
    )
}

/// Minimal repair of `a` against the shard minimum: while some shard has
/// fewer than `n_min` members, moves into the most deficient shard the node
/// of the largest shard that least prefers its current shard over the
/// deficient one (preferences from `scores`, laid out `[node][shard]`).
/// Returns whether any node moved.
pub fn repair(a: &mut ShardAssignment, scores: &[f64], d: usize, n_min: usize) -> bool {
    let mut repaired = false;
    loop {
        let sizes = a.sizes(d);
        let Some(target) = (0..d).filter(|&x| sizes[x] < n_min).min_by_key(|&x| (sizes[x], x)) else {
            break;
        };
        let donor = (0..d).max_by_key(|&x| (sizes[x], std::cmp::Reverse(x))).expect("d >= 1");
        if sizes[donor] <= n_min {
            // not enough nodes to satisfy the minimum anywhere
            break;
        }
        let margin = |i: usize| scores[i * d + donor] - scores[i * d + target];
        let node = (0..a.len())
            .filter(|&i| a.0[i] == donor)
            .min_by(|&p, &q| margin(p).total_cmp(&margin(q)).then(p.cmp(&q)))
            .expect("donor shard is non-empty");
        a.0[node] = target;
        repaired = true;
    }
    repaired
}

/// Greedy decode followed by [`repair`].
pub fn decode_with_repair(scores: &[f64], n: usize, d: usize, n_min: usize) -> (ShardAssignment, bool) {
    let mut a = greedy(scores, n, d);
    let repaired = repair(&mut a, scores, d, n_min);
    (a, repaired)
}

/// Per-node softmax over `[node][shard]` logits.
pub fn softmax_rows(logits: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (src, dst) in logits.chunks(d).zip(out.chunks_mut(d)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &z) in dst.iter_mut().zip(src) {
            *o = (z - max).exp();
            sum += *o;
        }
        dst.iter_mut().for_each(|o| *o /= sum);
    }
    out
}

fn pick_proposal(
    scores: &[f64],
    best: Option<(ShardAssignment, f64)>,
    snap: &Snapshot,
    cfg: &SimConfig,
) -> Proposal {
    let net = &cfg.network;
    let (a, repaired) = decode_with_repair(scores, snap.num_nodes(), net.d_shards, net.n_min);
    let r = virtual_reward_value(snap, &a, cfg);
    match best {
        // the committee keeps the best virtual trial when the policy's own
        // proposal scores lower
        Some((b, br)) if br > r => Proposal::plain(b),
        _ => Proposal { assignment: a, repaired },
    }
}

/// DQN-backed strategy. The agent persists across triggers and keeps
/// training on each new snapshot.
#[derive(Debug, Default)]
pub struct DqnStrategy {
    agent: Option<DqnAgent>,
    pub last_log: Option<TrainingLog>,
}

impl DqnStrategy {
    pub fn agent(&self) -> Option<&DqnAgent> {
        self.agent.as_ref()
    }
}

impl ReshardingStrategy for DqnStrategy {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn training_log(&self) -> Option<&TrainingLog> {
        self.last_log.as_ref()
    }

    fn policy_json(&self) -> Option<String> {
        self.agent.as_ref().and_then(|a| serde_json::to_string(a).ok())
    }

    fn propose(&mut self, snap: &Snapshot, cfg: &SimConfig, rng: &mut DeterministicRng) -> Result<Proposal> {
        let (n, d) = (snap.num_nodes(), cfg.network.d_shards);
        let state = encode_state(snap, d);
        if !cfg.dqn.warm_start {
            self.agent = None;
        }
        let agent = self
            .agent
            .get_or_insert_with(|| DqnAgent::new(state.len(), n, d, &cfg.dqn, &mut rng.split("init")));
        agent.repair_min = cfg.dqn.repair_rollouts.then_some(cfg.network.n_min);
        let out = agent.train(&state, |a| virtual_reward_value(snap, a, cfg), rng)?;
        let scores = agent.q_values(&state)?;
        self.last_log = Some(out.log);
        Ok(pick_proposal(&scores, out.best, snap, cfg))
    }
}

/// PPO-backed strategy, persistent like [`DqnStrategy`].
#[derive(Debug, Default)]
pub struct PpoStrategy {
    agent: Option<PpoAgent>,
    pub last_log: Option<TrainingLog>,
}

impl PpoStrategy {
    pub fn agent(&self) -> Option<&PpoAgent> {
        self.agent.as_ref()
    }
}

impl ReshardingStrategy for PpoStrategy {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn training_log(&self) -> Option<&TrainingLog> {
        self.last_log.as_ref()
    }

    fn policy_json(&self) -> Option<String> {
        self.agent.as_ref().and_then(|a| serde_json::to_string(a).ok())
    }

    fn propose(&mut self, snap: &Snapshot, cfg: &SimConfig, rng: &mut DeterministicRng) -> Result<Proposal> {
        let (n, d) = (snap.num_nodes(), cfg.network.d_shards);
        let state = encode_state(snap, d);
        if !cfg.ppo.warm_start {
            self.agent = None;
        }
        let agent = self
            .agent
            .get_or_insert_with(|| PpoAgent::new(state.len(), n, d, &cfg.ppo, &mut rng.split("init")));
        agent.repair_min = cfg.ppo.repair_rollouts.then_some(cfg.network.n_min);
        let out = agent.train(&state, |a| virtual_reward_value(snap, a, cfg), rng)?;
        let scores = agent.logits(&state)?;
        self.last_log = Some(out.log);
        Ok(pick_proposal(&scores, out.best, snap, cfg))
    }
}
