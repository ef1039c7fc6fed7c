//! Six-term resharding objective.
//!
//! `R = xi + varrho + eta - psi + omega_in - omega_cr` where `xi` rewards
//! balanced shard sizes, `varrho` an uncorrupted network, `eta` a low
//! cross-shard ratio, `psi` is the fraction of nodes moved, and the two
//! omegas are the intra-shard and cross-shard trust variances.

use serde::{Deserialize, Serialize};

use crate::assignment::{validate_with, ShardAssignment, ValidatedAssignment};
use crate::config::{RewardConfig, RiskConfig, SimConfig};
use crate::error::{Error, Result};
use crate::risk::{evaluate, RiskReport};
use crate::trust::GlobalTrustTable;
use crate::txmatrix::{cst_stats, TransactionMatrix, TxStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub xi: f64,
    pub varrho: f64,
    pub eta: f64,
    pub psi: f64,
    pub omega_in: f64,
    pub omega_cr: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(xi: f64, varrho: f64, eta: f64, psi: f64, omega_in: f64, omega_cr: f64) -> Self {
        Self {
            xi,
            varrho,
            eta,
            psi,
            omega_in,
            omega_cr,
            total: xi + varrho + eta - psi + omega_in - omega_cr,
        }
    }

    /// Recomputes the total from the components.
    pub fn recomputed_total(&self) -> f64 {
        self.xi + self.varrho + self.eta - self.psi + self.omega_in - self.omega_cr
    }
}

pub fn shard_balance(a: &ValidatedAssignment, cfg: &RewardConfig) -> f64 {
    let sizes = a.sizes();
    let max = sizes.iter().copied().max().unwrap_or(0);
    let min = sizes.iter().copied().min().unwrap_or(0);
    if max - min <= cfg.balance_slack {
        cfg.e_a
    } else {
        -cfg.e_a
    }
}

pub fn corruption_reward(report: &RiskReport, cfg: &RewardConfig) -> f64 {
    if report.any_corrupted() {
        -cfg.e_b
    } else {
        cfg.e_b
    }
}

/// `lambda_a * (rho_cr - ratio) * lambda_b^(lambda_c * |ratio - rho_cr|)`.
pub fn cst_reward(ratio: f64, risk_cfg: &RiskConfig, cfg: &RewardConfig) -> f64 {
    let gap = risk_cfg.rho_cr - ratio;
    cfg.lambda_a * gap * cfg.lambda_b.powf(cfg.lambda_c * gap.abs())
}

/// Fraction of nodes whose shard differs between the two allocations.
pub fn shift_penalty(prev: &ShardAssignment, next: &ShardAssignment) -> Result<f64> {
    if prev.len() != next.len() {
        return Err(Error::DimensionMismatch { expected: prev.len(), got: next.len() });
    }
    if prev.is_empty() {
        return Ok(0.0);
    }
    let moved = prev.0.iter().zip(&next.0).filter(|(a, b)| a != b).count();
    Ok(moved as f64 / prev.len() as f64)
}

fn shard_means(g: &GlobalTrustTable, a: &ValidatedAssignment) -> Vec<f64> {
    a.all_members()
        .iter()
        .map(|m| {
            if m.is_empty() {
                0.0
            } else {
                m.iter().map(|&k| g.get(k)).sum::<f64>() / m.len() as f64
            }
        })
        .collect()
}

/// Mean over shards of the within-shard population variance of global trust.
pub fn intra_trust_variance(g: &GlobalTrustTable, a: &ValidatedAssignment) -> f64 {
    let means = shard_means(g, a);
    let d = a.num_shards() as f64;
    a.all_members()
        .iter()
        .zip(&means)
        .filter(|(m, _)| !m.is_empty())
        .map(|(m, theta)| m.iter().map(|&k| (g.get(k) - theta).powi(2)).sum::<f64>() / m.len() as f64)
        .sum::<f64>()
        / d
}

/// Population variance of the shard means.
pub fn cross_trust_variance(g: &GlobalTrustTable, a: &ValidatedAssignment) -> f64 {
    let means = shard_means(g, a);
    let d = means.len() as f64;
    let bar = means.iter().sum::<f64>() / d;
    means.iter().map(|t| (t - bar).powi(2)).sum::<f64>() / d
}

/// A proposal scored against a snapshot, with the intermediate results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub breakdown: RewardBreakdown,
    pub report: RiskReport,
    pub stats: TxStats,
}

/// Scores `proposal` against `(g, tx, prev)`. Proposals breaking the shard
/// minimum are rejected with [`Error::ConstraintViolation`]; they are not
/// repaired here.
pub fn score_proposal(
    g: &GlobalTrustTable,
    tx: &TransactionMatrix,
    prev: &ShardAssignment,
    proposal: &ShardAssignment,
    cfg: &SimConfig,
) -> Result<ScoredProposal> {
    let net = &cfg.network;
    let a = validate_with(proposal, net.n_total, net.d_shards, net.n_min).map_err(|e| match e {
        Error::ShardTooSmall { shard, size } => Error::ConstraintViolation { shard, size },
        other => other,
    })?;
    let stats = cst_stats(tx, &a)?;
    let report = evaluate(g, &a, &stats, &cfg.trust, &cfg.risk);
    let breakdown = RewardBreakdown::new(
        shard_balance(&a, &cfg.reward),
        corruption_reward(&report, &cfg.reward),
        cst_reward(stats.ratio, &cfg.risk, &cfg.reward),
        shift_penalty(prev, proposal)?,
        intra_trust_variance(g, &a),
        cross_trust_variance(g, &a),
    );
    Ok(ScoredProposal { breakdown, report, stats })
}

pub fn total_reward(
    g: &GlobalTrustTable,
    tx: &TransactionMatrix,
    prev: &ShardAssignment,
    proposal: &ShardAssignment,
    cfg: &SimConfig,
) -> Result<RewardBreakdown> {
    score_proposal(g, tx, prev, proposal, cfg).map(|s| s.breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn va(v: Vec<usize>, d: usize) -> ValidatedAssignment {
        let n = v.len();
        validate_with(&ShardAssignment(v), n, d, 1).unwrap()
    }

    fn split(sizes: &[usize]) -> ValidatedAssignment {
        let v: Vec<usize> = sizes.iter().enumerate().flat_map(|(x, &s)| std::iter::repeat_n(x, s)).collect();
        va(v, sizes.len())
    }

    #[test]
    fn balance_cases() {
        let c = RewardConfig::default();
        assert_eq!(shard_balance(&split(&[8, 8]), &c), 1.0);
        assert_eq!(shard_balance(&split(&[10, 6]), &c), -1.0);
        let c2 = RewardConfig { balance_slack: 2, ..c };
        assert_eq!(shard_balance(&split(&[9, 7]), &c2), 1.0);
    }

    #[test]
    fn cst_reward_cases() {
        let r = RiskConfig::default();
        let c = RewardConfig::default();
        assert_eq!(cst_reward(0.4, &r, &c), 0.0);
        assert!((cst_reward(0.2, &r, &c) - 1.8).abs() < 1e-12);
        assert!((cst_reward(0.6, &r, &c) + 1.8).abs() < 1e-12);
    }

    #[test]
    fn shift_cases() {
        let a = ShardAssignment((0..16).map(|i| i / 8).collect());
        assert_eq!(shift_penalty(&a, &a).unwrap(), 0.0);
        let flipped = ShardAssignment(a.0.iter().map(|s| 1 - s).collect());
        assert_eq!(shift_penalty(&a, &flipped).unwrap(), 1.0);
        let mut four = a.clone();
        for i in [0, 1, 8, 9] {
            four.0[i] = 1 - four.0[i];
        }
        assert_eq!(shift_penalty(&a, &four).unwrap(), 0.25);
        assert!(shift_penalty(&a, &ShardAssignment(vec![0])).is_err());
    }

    #[test]
    fn variance_cases() {
        let flat = GlobalTrustTable { episode: 1, g: vec![0.7; 4] };
        assert_eq!(intra_trust_variance(&flat, &split(&[2, 2])), 0.0);

        let g = GlobalTrustTable { episode: 1, g: vec![0.0, 1.0] };
        assert!((intra_trust_variance(&g, &split(&[2])) - 0.25).abs() < 1e-15);
        assert_eq!(cross_trust_variance(&g, &split(&[2])), 0.0);

        let g = GlobalTrustTable { episode: 1, g: vec![0.0, 1.0, 0.5, 0.5] };
        assert!((intra_trust_variance(&g, &split(&[2, 2])) - 0.125).abs() < 1e-15);

        let g = GlobalTrustTable { episode: 1, g: vec![0.2, 0.2, 0.8, 0.8] };
        assert!((cross_trust_variance(&g, &split(&[2, 2])) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn corruption_cases() {
        let c = RewardConfig::default();
        let mk = |corrupted: Vec<bool>| RiskReport {
            high_risk: vec![],
            shard_means: vec![],
            grand_mean: 0.0,
            corrupted,
            cst_ratio: 0.0,
            trigger: false,
            reason: crate::risk::TriggerReason::None,
        };
        assert_eq!(corruption_reward(&mk(vec![false, false]), &c), 1.0);
        assert_eq!(corruption_reward(&mk(vec![true, false]), &c), -1.0);
        assert_eq!(corruption_reward(&mk(vec![true, true]), &c), -1.0);
    }

    #[test]
    fn aligned_all_honest_total() {
        let cfg = SimConfig::default();
        let prop = ShardAssignment((0..16).map(|i| i / 8).collect());
        let mut tx = TransactionMatrix::zeros(16);
        for i in 0..16 {
            for j in (i + 1)..16 {
                if i / 8 == j / 8 {
                    tx.set(i, j, 10);
                }
            }
        }
        let g = GlobalTrustTable::initial(16);
        let b = total_reward(&g, &tx, &prop, &prop, &cfg).unwrap();
        let r = &cfg.reward;
        let expect = r.e_a + r.e_b + r.lambda_a * 0.4 * r.lambda_b.powf(r.lambda_c * 0.4);
        assert!((b.total - expect).abs() < 1e-12);
        assert_eq!(b.psi, 0.0);
    }

    #[test]
    fn empty_shard_is_violation() {
        let cfg = SimConfig::default();
        let prop = ShardAssignment(vec![0; 16]);
        let r = total_reward(&GlobalTrustTable::initial(16), &TransactionMatrix::zeros(16), &prop, &prop, &cfg);
        assert_eq!(r, Err(Error::ConstraintViolation { shard: 1, size: 0 }));
    }
}
