//! Proximal policy optimisation with a factored categorical policy.
//!
//! Each node draws its shard from its own softmax; the joint log-probability
//! is the sum over nodes. The critic predicts the expected reward of the
//! current state and serves as the baseline.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::mlp::{Mlp, Sgd};
use super::{repair, softmax_rows, track_best, EpochStat, TrainingLog, TrainingOutcome};
use crate::assignment::ShardAssignment;
use crate::config::PpoConfig;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

/// Clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)` and its derivative
/// with respect to `r`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    let value = (ratio * adv).min(clipped * adv);
    let flat = (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
    (value, if flat { 0.0 } else { adv })
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, Serialize)]
pub struct PpoAgent {
    pub n: usize,
    pub d: usize,
    pub cfg: PpoConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    /// When set, sampled allocations are repaired against this shard
    /// minimum (using the current logits as preferences) before scoring;
    /// the update still uses the probability of the sampled action.
    pub repair_min: Option<usize>,
    #[serde(skip)]
    actor_opt: Sgd,
    #[serde(skip)]
    critic_opt: Sgd,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, n: usize, d: usize, cfg: &PpoConfig, rng: &mut R) -> Self {
        Self {
            n,
            d,
            cfg: cfg.clone(),
            actor: Mlp::new(&[state_dim, cfg.hidden, n * d], 0.01, rng),
            critic: Mlp::new(&[state_dim, cfg.hidden, 1], 0.1, rng),
            repair_min: None,
            actor_opt: Sgd::new(cfg.learning_rate, cfg.momentum, cfg.grad_clip),
            critic_opt: Sgd::new(cfg.learning_rate, cfg.momentum, cfg.grad_clip),
        }
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(state)
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax_rows(&self.logits(state)?, self.d))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(state)?[0])
    }

    /// Most likely shard per node.
    pub fn mode(&self, state: &[f64]) -> Result<ShardAssignment> {
        Ok(super::greedy(&self.logits(state)?, self.n, self.d))
    }

    fn log_prob(&self, probs: &[f64], action: &[usize]) -> f64 {
        action.iter().enumerate().map(|(i, &x)| probs[i * self.d + x].max(1e-300).ln()).sum()
    }

    /// Sum over nodes of the per-node entropy.
    pub fn entropy(&self, probs: &[f64]) -> f64 {
        -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Gradient of `loss` with respect to the logits for one minibatch.
    fn actor_upstream(
        &self,
        probs: &[f64],
        batch: &[(Vec<usize>, f64, f64)],
        idx: &[usize],
    ) -> (f64, Vec<f64>) {
        let (n, d) = (self.n, self.d);
        let mut upstream = vec![0.0; n * d];
        let mut loss = 0.0;
        let scale = 1.0 / idx.len() as f64;
        for &k in idx {
            let (action, logp_old, adv) = &batch[k];
            let ratio = (self.log_prob(probs, action) - logp_old).exp();
            let (surr, dsurr) = clipped_surrogate(ratio, *adv, self.cfg.clip_ratio);
            loss -= surr * scale;
            // d(-surr)/d logp = -dsurr * ratio
            let g = -dsurr * ratio * scale;
            if g != 0.0 {
                for (i, &x) in action.iter().enumerate() {
                    for k in 0..d {
                        let ind = if k == x { 1.0 } else { 0.0 };
                        upstream[i * d + k] += g * (ind - probs[i * d + k]);
                    }
                }
            }
        }
        let c = self.cfg.entropy_coef;
        if c != 0.0 {
            loss -= c * self.entropy(probs);
            for i in 0..n {
                let row = &probs[i * d..(i + 1) * d];
                let h: f64 = -row.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
                for k in 0..d {
                    let p = row[k];
                    if p > 0.0 {
                        upstream[i * d + k] += c * p * (p.ln() + h);
                    }
                }
            }
        }
        (loss, upstream)
    }

    pub fn train<F>(&mut self, state: &[f64], reward: F, rng: &mut DeterministicRng) -> Result<TrainingOutcome>
    where
        F: Fn(&ShardAssignment) -> f64,
    {
        if state.len() != self.actor.input_size() {
            return Err(Error::DimensionMismatch { expected: self.actor.input_size(), got: state.len() });
        }
        let (n, d) = (self.n, self.d);
        let mut log = TrainingLog::default();
        let mut best = None;
        let mbs = self.cfg.minibatches.max(1);
        for epoch in 0..self.cfg.epochs {
            let logits = self.logits(state)?;
            let probs = softmax_rows(&logits, d);
            let baseline = self.value(state)?;
            let mut batch = Vec::with_capacity(self.cfg.rollout_batch);
            let mut rewards = Vec::with_capacity(self.cfg.rollout_batch);
            for _ in 0..self.cfg.rollout_batch {
                let action: Vec<usize> =
                    (0..n).map(|i| sample_categorical(&probs[i * d..(i + 1) * d], rng)).collect();
                let mut exec = ShardAssignment(action.clone());
                if let Some(m) = self.repair_min {
                    repair(&mut exec, &logits, d, m);
                }
                let r = reward(&exec);
                track_best(&mut best, &exec.0, r);
                let logp = self.log_prob(&probs, &action);
                rewards.push(r);
                batch.push((action, logp, r - baseline));
            }
            if self.cfg.normalize_advantages && batch.len() > 1 {
                let m = batch.iter().map(|b| b.2).sum::<f64>() / batch.len() as f64;
                let var = batch.iter().map(|b| (b.2 - m).powi(2)).sum::<f64>() / batch.len() as f64;
                let sd = var.sqrt().max(1e-8);
                batch.iter_mut().for_each(|b| b.2 = (b.2 - m) / sd);
            }
            let mut order: Vec<usize> = (0..batch.len()).collect();
            let mut loss_sum = 0.0;
            let mut steps = 0;
            for _ in 0..self.cfg.update_epochs {
                order.shuffle(rng);
                let size = batch.len().div_ceil(mbs).max(1);
                for idx in order.chunks(size) {
                    let probs = self.probabilities(state)?;
                    let (loss, upstream) = self.actor_upstream(&probs, &batch, idx);
                    let grads = self.actor.backward(state, &upstream)?;
                    self.actor_opt.step(&mut self.actor, grads);

                    let v = self.value(state)?;
                    let cv = self.cfg.value_coef;
                    let scale = 1.0 / idx.len() as f64;
                    let (mut vloss, mut dv) = (0.0, 0.0);
                    for &k in idx {
                        let err = v - rewards[k];
                        vloss += cv * err * err * scale;
                        dv += 2.0 * cv * err * scale;
                    }
                    let grads = self.critic.backward(state, &[dv])?;
                    self.critic_opt.step(&mut self.critic, grads);
                    loss_sum += loss + vloss;
                    steps += 1;
                }
            }
            log.epochs.push(EpochStat {
                epoch,
                mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
                loss: loss_sum / steps.max(1) as f64,
            });
        }
        Ok(TrainingOutcome { log, best })
    }
}
