//! Common interface for resharding strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::ShardAssignment;
use crate::config::SimConfig;
use crate::drl::TrainingLog;
use crate::env::Snapshot;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

/// A strategy's answer to a trigger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub assignment: ShardAssignment,
    /// The raw output broke the shard minimum and was repaired.
    pub repaired: bool,
}

impl Proposal {
    pub fn plain(assignment: ShardAssignment) -> Self {
        Self { assignment, repaired: false }
    }
}

pub trait ReshardingStrategy: Send {
    fn name(&self) -> &'static str;

    /// Proposes a new allocation for the snapshot. Returned allocations must
    /// satisfy the shard minimum; otherwise return an error.
    fn propose(&mut self, snap: &Snapshot, cfg: &SimConfig, rng: &mut DeterministicRng) -> Result<Proposal>;

    /// Training curve of the most recent `propose` call, for learned strategies.
    fn training_log(&self) -> Option<&TrainingLog> {
        None
    }

    /// Current policy parameters as JSON, for learned strategies.
    fn policy_json(&self) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Community,
    Trust,
    Dqn,
    Ppo,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::Community,
        StrategyKind::Trust,
        StrategyKind::Dqn,
        StrategyKind::Ppo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Community => "community",
            StrategyKind::Trust => "trust",
            StrategyKind::Dqn => "dqn",
            StrategyKind::Ppo => "ppo",
        }
    }

    pub fn build(&self) -> Box<dyn ReshardingStrategy> {
        use crate::baselines::{CommunityStrategy, RandomStrategy, TrustStrategy};
        use crate::drl::{DqnStrategy, PpoStrategy};
        match self {
            StrategyKind::Random => Box::new(RandomStrategy),
            StrategyKind::Community => Box::new(CommunityStrategy),
            StrategyKind::Trust => Box::new(TrustStrategy),
            StrategyKind::Dqn => Box::new(DqnStrategy::default()),
            StrategyKind::Ppo => Box::new(PpoStrategy::default()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}
