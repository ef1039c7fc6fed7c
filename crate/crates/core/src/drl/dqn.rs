//! Deep Q-learning over factored allocations.
//!
//! The joint Q-value of an allocation is the sum of the selected per-node
//! outputs. Each step is a complete episode, so the regression target of a
//! sample is its reward.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use super::mlp::{Mlp, Sgd};
use super::{greedy, repair, track_best, EpochStat, TrainingLog, TrainingOutcome};
use crate::assignment::ShardAssignment;
use crate::config::DqnConfig;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

/// Fixed-capacity ring buffer of `(action, reward)` samples.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<(Vec<usize>, f64)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, action: Vec<usize>, reward: f64) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back((action, reward));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn get(&self, k: usize) -> &(Vec<usize>, f64) {
        &self.items[k]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DqnAgent {
    pub n: usize,
    pub d: usize,
    pub cfg: DqnConfig,
    pub q: Mlp,
    pub target: Mlp,
    /// When set, rollouts are repaired against this shard minimum (using
    /// the current Q-values as preferences) before they are scored.
    pub repair_min: Option<usize>,
    #[serde(skip)]
    opt: Sgd,
    #[serde(skip)]
    replay: ReplayBuffer,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, n: usize, d: usize, cfg: &DqnConfig, rng: &mut R) -> Self {
        let q = Mlp::new(&[state_dim, cfg.hidden, n * d], 0.1, rng);
        Self {
            n,
            d,
            cfg: cfg.clone(),
            target: q.clone(),
            q,
            repair_min: None,
            opt: Sgd::new(cfg.learning_rate, cfg.momentum, cfg.grad_clip),
            replay: ReplayBuffer::new(cfg.replay_capacity),
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.q.forward(state)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<ShardAssignment> {
        Ok(greedy(&self.q_values(state)?, self.n, self.d))
    }

    /// Exploration rate at `epoch`: linear from `eps_start` to `eps_end`
    /// over `eps_decay_epochs`, then constant.
    pub fn epsilon(&self, epoch: usize) -> f64 {
        let c = &self.cfg;
        if c.eps_decay_epochs == 0 || epoch >= c.eps_decay_epochs {
            return c.eps_end;
        }
        let t = epoch as f64 / c.eps_decay_epochs as f64;
        c.eps_start + (c.eps_end - c.eps_start) * t
    }

    /// Mean squared error of the given samples, summed over nodes: every
    /// selected per-node output is regressed on the sample's reward.
    fn loss_and_upstream(&self, q: &[f64], batch: &[usize]) -> (f64, Vec<f64>) {
        let d = self.d;
        let mut upstream = vec![0.0; q.len()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for &k in batch {
            let (action, reward) = self.replay.get(k);
            for (i, &x) in action.iter().enumerate() {
                let err = q[i * d + x] - reward;
                loss += err * err * scale;
                upstream[i * d + x] += 2.0 * err * scale;
            }
        }
        (loss, upstream)
    }

    /// Trains on a fixed state against `reward` and reports per-epoch stats.
    pub fn train<F>(&mut self, state: &[f64], reward: F, rng: &mut DeterministicRng) -> Result<TrainingOutcome>
    where
        F: Fn(&ShardAssignment) -> f64,
    {
        if state.len() != self.q.input_size() {
            return Err(Error::DimensionMismatch { expected: self.q.input_size(), got: state.len() });
        }
        let (n, d) = (self.n, self.d);
        self.replay.clear();
        let mut log = TrainingLog::default();
        let mut best = None;
        for epoch in 0..self.cfg.epochs {
            let eps = self.epsilon(epoch);
            let q = self.q.forward(state)?;
            let exploit = greedy(&q, n, d);
            let mut total = 0.0;
            for _ in 0..self.cfg.rollouts_per_epoch {
                let action: Vec<usize> = (0..n)
                    .map(|i| if rng.random::<f64>() < eps { rng.random_range(0..d) } else { exploit.0[i] })
                    .collect();
                let mut a = ShardAssignment(action);
                if let Some(m) = self.repair_min {
                    repair(&mut a, &q, d, m);
                }
                let r = reward(&a);
                total += r;
                track_best(&mut best, &a.0, r);
                self.replay.push(a.0, r);
            }
            let mut loss_sum = 0.0;
            for _ in 0..self.cfg.updates_per_epoch {
                let batch: Vec<usize> =
                    (0..self.cfg.batch_size).map(|_| rng.random_range(0..self.replay.len())).collect();
                let q = self.q.forward(state)?;
                let (loss, upstream) = self.loss_and_upstream(&q, &batch);
                let grads = self.q.backward(state, &upstream)?;
                self.opt.step(&mut self.q, grads);
                loss_sum += loss;
            }
            if self.cfg.target_sync > 0 && (epoch + 1) % self.cfg.target_sync == 0 {
                self.target = self.q.clone();
            }
            log.epochs.push(EpochStat {
                epoch,
                mean_reward: total / self.cfg.rollouts_per_epoch.max(1) as f64,
                loss: loss_sum / self.cfg.updates_per_epoch.max(1) as f64,
            });
        }
        Ok(TrainingOutcome { log, best })
    }
}
