//! Shard risk evaluation: decides whether the current allocation needs
//! resharding.

use serde::{Deserialize, Serialize};

use crate::assignment::ValidatedAssignment;
use crate::config::{RiskConfig, TrustConfig};
use crate::trust::GlobalTrustTable;
use crate::txmatrix::TxStats;

/// Dishonest nodes one shard of `n_x` nodes tolerates: `floor((n_x - 1) / 3)`.
pub fn f_intra(n_x: usize) -> usize {
    n_x.saturating_sub(1) / 3
}

/// Network-wide tolerance with `n` nodes in `d` equal shards.
pub fn f_total(n: usize, d: usize) -> usize {
    f_intra(n / d) * d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerReason {
    None,
    ShardCorrupted(usize),
    CstExceeded,
}

impl TriggerReason {
    pub fn label(&self) -> String {
        match self {
            TriggerReason::None => "none".into(),
            TriggerReason::ShardCorrupted(x) => format!("shard_corrupted:{x}"),
            TriggerReason::CstExceeded => "cst_exceeded".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// High-risk node ids per shard.
    pub high_risk: Vec<Vec<usize>>,
    pub shard_means: Vec<f64>,
    pub grand_mean: f64,
    pub corrupted: Vec<bool>,
    pub cst_ratio: f64,
    pub trigger: bool,
    pub reason: TriggerReason,
}

impl RiskReport {
    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }

    pub fn any_corrupted(&self) -> bool {
        self.corrupted.iter().any(|&c| c)
    }
}

/// Runs the evaluator. A shard is corrupted when more than `f_intra` of its
/// nodes have global trust strictly below `rho_t`; the first corrupted shard
/// (lowest index) is reported as the trigger reason, otherwise the CST ratio
/// is checked against `rho_cr`. The report is always fully populated.
pub fn evaluate(
    g: &GlobalTrustTable,
    a: &ValidatedAssignment,
    stats: &TxStats,
    trust_cfg: &TrustConfig,
    risk_cfg: &RiskConfig,
) -> RiskReport {
    let members = a.all_members();
    let high_risk: Vec<Vec<usize>> = members
        .iter()
        .map(|m| m.iter().copied().filter(|&i| g.get(i) < trust_cfg.rho_t).collect())
        .collect();
    let shard_means: Vec<f64> = members
        .iter()
        .map(|m| {
            if m.is_empty() {
                0.0
            } else {
                m.iter().map(|&i| g.get(i)).sum::<f64>() / m.len() as f64
            }
        })
        .collect();
    let grand_mean = if shard_means.is_empty() {
        0.0
    } else {
        shard_means.iter().sum::<f64>() / shard_means.len() as f64
    };
    let corrupted: Vec<bool> = high_risk
        .iter()
        .zip(members)
        .map(|(h, m)| h.len() > f_intra(m.len()))
        .collect();

    let reason = match corrupted.iter().position(|&c| c) {
        Some(x) => TriggerReason::ShardCorrupted(x),
        None if stats.ratio > risk_cfg.rho_cr => TriggerReason::CstExceeded,
        None => TriggerReason::None,
    };
    RiskReport {
        high_risk,
        shard_means,
        grand_mean,
        corrupted,
        cst_ratio: stats.ratio,
        trigger: reason != TriggerReason::None,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{validate_with, ShardAssignment};

    #[test]
    fn intra_tolerance() {
        assert_eq!(f_intra(8), 2);
        assert_eq!(f_intra(4), 1);
        assert_eq!(f_intra(1), 0);
    }

    #[test]
    fn total_tolerance() {
        assert_eq!(f_total(16, 2), 4);
        assert_eq!(f_total(12, 3), 3);
        assert_eq!(f_total(4, 1), 1);
    }

    fn balanced16() -> ValidatedAssignment {
        validate_with(&ShardAssignment((0..16).map(|i| i / 8).collect()), 16, 2, 4).unwrap()
    }

    fn stats(ratio: f64) -> TxStats {
        TxStats { phi_in: 0, phi_cr: 0, ratio }
    }

    #[test]
    fn quiet_network_does_not_trigger() {
        let r = evaluate(
            &GlobalTrustTable::initial(16),
            &balanced16(),
            &stats(0.0),
            &TrustConfig::default(),
            &RiskConfig::default(),
        );
        assert!(!r.trigger);
        assert!(r.high_risk.iter().all(Vec::is_empty));
        assert_eq!(r.reason, TriggerReason::None);
    }

    #[test]
    fn three_low_trust_nodes_corrupt_shard_zero() {
        let mut g = GlobalTrustTable::initial(16);
        for i in [1, 4, 6] {
            g.g[i] = 0.3;
        }
        let r = evaluate(&g, &balanced16(), &stats(0.0), &TrustConfig::default(), &RiskConfig::default());
        assert_eq!(r.high_risk[0], vec![1, 4, 6]);
        assert_eq!(r.corrupted, vec![true, false]);
        assert_eq!(r.reason, TriggerReason::ShardCorrupted(0));
    }

    #[test]
    fn two_low_trust_nodes_are_tolerated() {
        let mut g = GlobalTrustTable::initial(16);
        g.g[9] = 0.1;
        g.g[10] = 0.1;
        let r = evaluate(&g, &balanced16(), &stats(0.3), &TrustConfig::default(), &RiskConfig::default());
        assert!(!r.trigger);
        assert_eq!(r.high_risk[1].len(), 2);
    }

    #[test]
    fn cst_over_threshold_triggers() {
        let r = evaluate(
            &GlobalTrustTable::initial(16),
            &balanced16(),
            &stats(0.5),
            &TrustConfig::default(),
            &RiskConfig::default(),
        );
        assert_eq!(r.reason, TriggerReason::CstExceeded);
        // equality does not trigger
        let r = evaluate(
            &GlobalTrustTable::initial(16),
            &balanced16(),
            &stats(0.4),
            &TrustConfig::default(),
            &RiskConfig::default(),
        );
        assert!(!r.trigger);
    }

    #[test]
    fn threshold_is_strict() {
        let mut g = GlobalTrustTable::initial(16);
        for i in 0..3 {
            g.g[i] = 0.67;
        }
        let r = evaluate(&g, &balanced16(), &stats(0.0), &TrustConfig::default(), &RiskConfig::default());
        assert!(r.high_risk[0].is_empty());
    }
}
