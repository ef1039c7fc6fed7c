//! Run parameters.
//!
//! Every section has defaults, so a config file only needs the keys it wants
//! to change. [`SimConfig::validate`] rejects out-of-range values with the
//! dotted name of the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_total: usize,
    pub d_shards: usize,
    pub n_min: usize,
    pub leads_per_episode: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_total: 16,
            d_shards: 2,
            n_min: 4,
            leads_per_episode: 1,
            seed: 0,
        }
    }
}

/// Where dishonest nodes sit in the initial allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Random balanced deal of all nodes.
    #[default]
    Scattered,
    /// Dishonest nodes packed into the lowest shard indices first.
    Concentrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub h_dishonest: usize,
    pub fail_prob: f64,
    pub tau: f64,
    pub kappa: f64,
    pub w_g: f64,
    pub w_u: f64,
    pub placement: Placement,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            h_dishonest: 4,
            fail_prob: 0.2,
            tau: 0.10,
            kappa: 1.0,
            w_g: 1.0,
            w_u: 1.0,
            placement: Placement::Scattered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub rho_t: f64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.3,
            mu: 0.2,
            gamma: 0.9,
            rho_t: 0.67,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub rho_cr: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { rho_cr: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub e_a: f64,
    pub e_b: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub balance_slack: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            e_a: 1.0,
            e_b: 1.0,
            lambda_a: 10.0,
            lambda_b: 0.9,
            lambda_c: 5.0,
            balance_slack: 1,
        }
    }
}

impl RewardConfig {
    /// Reward assigned to proposals that break the shard minimum.
    pub fn violation_penalty(&self) -> f64 {
        -(2.0 * self.e_a + 2.0 * self.e_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxConfig {
    pub base_mean: f64,
    pub base_sd: f64,
    pub collusion_boost: f64,
    /// Draw a fresh matrix every episode; `false` keeps the first one.
    pub resample: bool,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            base_mean: 10.0,
            base_sd: 3.0,
            collusion_boost: 10.0,
            resample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThroughputConfig {
    pub cst_cost: f64,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        Self { cst_cost: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub eps_start: f64,
    pub eps_end: f64,
    /// Training epochs over which epsilon decays linearly.
    pub eps_decay_epochs: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Proposals sampled from the behaviour policy per epoch.
    pub rollouts_per_epoch: usize,
    /// Gradient steps per epoch.
    pub updates_per_epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub target_sync: usize,
    pub epochs: usize,
    pub hidden: usize,
    /// Score rollouts after the shard-minimum repair used at decode time.
    pub repair_rollouts: bool,
    /// Keep training the same network across triggers instead of starting
    /// from fresh weights each time.
    pub warm_start: bool,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_epochs: 60,
            replay_capacity: 2048,
            batch_size: 64,
            rollouts_per_epoch: 64,
            updates_per_epoch: 8,
            learning_rate: 1e-3,
            momentum: 0.9,
            grad_clip: 5.0,
            target_sync: 10,
            epochs: 100,
            hidden: 64,
            repair_rollouts: true,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub minibatches: usize,
    pub update_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub rollout_batch: usize,
    pub epochs: usize,
    pub hidden: usize,
    /// Standardise advantages within each rollout batch.
    pub normalize_advantages: bool,
    /// Score rollouts after the shard-minimum repair used at decode time.
    pub repair_rollouts: bool,
    /// Keep training the same network across triggers instead of starting
    /// from fresh weights each time.
    pub warm_start: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            entropy_coef: 0.03,
            value_coef: 0.5,
            minibatches: 4,
            update_epochs: 4,
            learning_rate: 1e-3,
            momentum: 0.9,
            grad_clip: 5.0,
            rollout_batch: 64,
            epochs: 100,
            hidden: 64,
            normalize_advantages: true,
            repair_rollouts: true,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub kl_sweeps: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { kl_sweeps: 10 }
    }
}

/// Complete, validated parameter set for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub network: NetworkConfig,
    pub attack: AttackConfig,
    pub trust: TrustConfig,
    pub risk: RiskConfig,
    pub reward: RewardConfig,
    pub tx: TxConfig,
    pub throughput: ThroughputConfig,
    pub baselines: BaselineConfig,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

fn prob(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is not in [0, 1]")))
    }
}

fn open_unit(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is not in (0, 1)")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be positive")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be non-negative")))
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.network;
        if n.d_shards < 1 {
            return Err(Error::config("network.d_shards", "must be at least 1"));
        }
        if n.n_min < 4 {
            return Err(Error::config("network.n_min", format!("{} is below 4", n.n_min)));
        }
        if n.n_total < n.d_shards * n.n_min {
            return Err(Error::config(
                "network.n_total",
                format!("{} < d_shards * n_min = {}", n.n_total, n.d_shards * n.n_min),
            ));
        }
        if n.leads_per_episode < 1 {
            return Err(Error::config("network.leads_per_episode", "must be positive"));
        }

        let a = &self.attack;
        if a.h_dishonest > n.n_total {
            return Err(Error::config(
                "attack.h_dishonest",
                format!("{} exceeds n_total {}", a.h_dishonest, n.n_total),
            ));
        }
        prob("attack.fail_prob", a.fail_prob)?;
        prob("attack.tau", a.tau)?;
        prob("attack.kappa", a.kappa)?;
        for (field, w) in [("attack.w_g", a.w_g), ("attack.w_u", a.w_u)] {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::config(field, format!("{w} is not in (0, 1]")));
            }
        }

        let t = &self.trust;
        prob("trust.alpha", t.alpha)?;
        prob("trust.beta", t.beta)?;
        prob("trust.mu", t.mu)?;
        let sum = t.alpha + t.beta + t.mu;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("trust.alpha", format!("alpha + beta + mu = {sum}, expected 1")));
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return Err(Error::config("trust.gamma", format!("{} is not in (0, 1]", t.gamma)));
        }
        open_unit("trust.rho_t", t.rho_t)?;
        open_unit("risk.rho_cr", self.risk.rho_cr)?;

        let r = &self.reward;
        positive("reward.e_a", r.e_a)?;
        positive("reward.e_b", r.e_b)?;
        positive("reward.lambda_a", r.lambda_a)?;
        if !(r.lambda_b > 0.0 && r.lambda_b <= 1.0) {
            return Err(Error::config("reward.lambda_b", format!("{} is not in (0, 1]", r.lambda_b)));
        }
        non_negative("reward.lambda_c", r.lambda_c)?;

        positive("tx.base_mean", self.tx.base_mean)?;
        non_negative("tx.base_sd", self.tx.base_sd)?;
        non_negative("tx.collusion_boost", self.tx.collusion_boost)?;

        if !(self.throughput.cst_cost >= 1.0) {
            return Err(Error::config("throughput.cst_cost", "must be at least 1"));
        }

        let d = &self.dqn;
        prob("dqn.eps_start", d.eps_start)?;
        prob("dqn.eps_end", d.eps_end)?;
        positive("dqn.learning_rate", d.learning_rate)?;
        prob("dqn.momentum", d.momentum)?;
        positive("dqn.grad_clip", d.grad_clip)?;
        for (field, v) in [
            ("dqn.replay_capacity", d.replay_capacity),
            ("dqn.batch_size", d.batch_size),
            ("dqn.rollouts_per_epoch", d.rollouts_per_epoch),
            ("dqn.target_sync", d.target_sync),
            ("dqn.epochs", d.epochs),
            ("dqn.hidden", d.hidden),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }

        let p = &self.ppo;
        open_unit("ppo.clip_ratio", p.clip_ratio)?;
        non_negative("ppo.entropy_coef", p.entropy_coef)?;
        non_negative("ppo.value_coef", p.value_coef)?;
        positive("ppo.learning_rate", p.learning_rate)?;
        prob("ppo.momentum", p.momentum)?;
        positive("ppo.grad_clip", p.grad_clip)?;
        for (field, v) in [
            ("ppo.minibatches", p.minibatches),
            ("ppo.update_epochs", p.update_epochs),
            ("ppo.rollout_batch", p.rollout_batch),
            ("ppo.epochs", p.epochs),
            ("ppo.hidden", p.hidden),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if p.minibatches > p.rollout_batch {
            return Err(Error::config("ppo.minibatches", "exceeds rollout_batch"));
        }
        Ok(())
    }
}
