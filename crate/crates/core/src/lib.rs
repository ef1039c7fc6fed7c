//! Deterministic simulator of a permissioned sharded blockchain under adaptive
//! collusion attacks.
//!
//! The pipeline per episode is: simulate intra-shard voting ([`consensus`]),
//! turn the vote record into local and global trust tables ([`trust`]),
//! evaluate shard risk ([`risk`]), and, when the evaluator fires, ask a
//! [`strategy::ReshardingStrategy`] for a new allocation. Allocations are
//! scored by the six-term objective in [`reward`]. The learned strategies
//! (DQN and PPO over a hand-written MLP) live in [`drl`]; the random,
//! community and trust baselines in [`baselines`].

pub mod assignment;
pub mod baselines;
pub mod config;
pub mod consensus;
pub mod drl;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod reward;
pub mod risk;
pub mod rng;
pub mod strategy;
pub mod trust;
pub mod txmatrix;

pub use assignment::{validate_assignment, Honesty, NodeProfile, ShardAssignment, ValidatedAssignment};
pub use config::SimConfig;
pub use error::{Error, Result};
pub use rng::{new_rng, DeterministicRng};
