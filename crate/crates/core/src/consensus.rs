//! Intra-shard voting under the honest/dishonest behaviour model.
//!
//! Message exchange is not simulated; each leader round produces one final
//! outcome per validator. The outcome grid plus per-node counters form the
//! block verification table consumed by [`crate::trust`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{NodeProfile, ValidatedAssignment};
use crate::config::AttackConfig;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteOutcome {
    Valid,
    Invalid,
    /// Lost to network failure.
    Missing,
}

/// Min-max normalized previous-episode global trust, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTrust(pub Vec<f64>);

impl NormalizedTrust {
    /// Bootstrap value for the first episode.
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// `(g_i - min) / (max - min)`; a flat vector maps to all ones.
pub fn normalize_trust(g_prev: &[f64]) -> Result<NormalizedTrust> {
    if let Some(node) = g_prev.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteTrust { node });
    }
    let min = g_prev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = g_prev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if g_prev.is_empty() || max == min {
        return Ok(NormalizedTrust::ones(g_prev.len()));
    }
    Ok(NormalizedTrust(g_prev.iter().map(|g| (g - min) / (max - min)).collect()))
}

/// Probability that `voter` casts a valid vote for `leader`'s block,
/// network loss included.
///
/// `u` is 1 when the block matches the voter's local version.
/// `dishonest_fraction` is the share of dishonest nodes in the shard; at or
/// above `tau` dishonest voters switch from mimicking honest behaviour to
/// the collusion rule (always endorse teammates, reject honest leaders with
/// probability `kappa`).
pub fn vote_probability(
    voter: &NodeProfile,
    leader: &NodeProfile,
    g_norm: &NormalizedTrust,
    u: bool,
    dishonest_fraction: f64,
    atk: &AttackConfig,
) -> f64 {
    let delivered = 1.0 - atk.fail_prob;
    let p = if voter.is_dishonest() && dishonest_fraction >= atk.tau {
        let collusion = if leader.is_dishonest() { 1.0 } else { 1.0 - atk.kappa };
        delivered * collusion
    } else {
        let u = if u { 1.0 } else { 0.0 };
        delivered * atk.w_g * g_norm.get(leader.id) * atk.w_u * u
    };
    p.clamp(0.0, 1.0)
}

/// One shard's record for an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardVotes {
    pub shard: usize,
    /// Shard members, ascending; `votes[r][k]` is the vote of `members[k]`.
    pub members: Vec<usize>,
    /// Leader (global node id) of each round.
    pub schedule: Vec<usize>,
    pub votes: Vec<Vec<VoteOutcome>>,
    pub dishonest_fraction: f64,
}

/// Block verification table for all shards of one episode, with the derived
/// counters indexed by global node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVerificationTable {
    n: usize,
    pub shards: Vec<ShardVotes>,
    /// Rounds led per node.
    led: Vec<u32>,
    /// `valid[i * n + j]`: valid votes node `i` cast for leader `j`.
    valid: Vec<u32>,
    /// `cast[i * n + j]`: non-missing votes node `i` cast for leader `j`.
    cast: Vec<u32>,
    /// Index into `shards` for every node.
    shard_of: Vec<usize>,
}

impl BlockVerificationTable {
    /// Assembles the table from per-shard records and derives the counters.
    pub fn from_shards(n: usize, shards: Vec<ShardVotes>) -> Self {
        let mut led = vec![0; n];
        let mut valid = vec![0; n * n];
        let mut cast = vec![0; n * n];
        let mut shard_of = vec![usize::MAX; n];
        for (x, s) in shards.iter().enumerate() {
            for &m in &s.members {
                shard_of[m] = x;
            }
            for (round, &leader) in s.schedule.iter().enumerate() {
                led[leader] += 1;
                for (k, &voter) in s.members.iter().enumerate() {
                    match s.votes[round][k] {
                        VoteOutcome::Valid => {
                            valid[voter * n + leader] += 1;
                            cast[voter * n + leader] += 1;
                        }
                        VoteOutcome::Invalid => cast[voter * n + leader] += 1,
                        VoteOutcome::Missing => {}
                    }
                }
            }
        }
        Self {
            n,
            shards,
            led,
            valid,
            cast,
            shard_of,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Times node `j` led (iota_j).
    pub fn led(&self, j: usize) -> u32 {
        self.led[j]
    }

    /// Valid votes `i` cast for leader `j`.
    pub fn valid_votes(&self, i: usize, j: usize) -> u32 {
        self.valid[i * self.n + j]
    }

    /// Ratio of non-empty votes `p` cast for leader `j`; 0 if `j` never led.
    pub fn nonempty_ratio(&self, p: usize, j: usize) -> f64 {
        match self.led[j] {
            0 => 0.0,
            l => self.cast[p * self.n + j] as f64 / l as f64,
        }
    }

    /// Members of the shard node `i` belonged to this episode.
    pub fn members_of(&self, i: usize) -> &[usize] {
        &self.shards[self.shard_of[i]].members
    }

    pub fn same_shard(&self, i: usize, j: usize) -> bool {
        self.shard_of[i] == self.shard_of[j]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.shards).expect("bvt serializes")
    }
}

/// Simulates every shard's leader rounds for one episode.
///
/// Each shard uses its own stream `votes/shard-<x>` split off `rng`, so the
/// result does not depend on the order shards are processed in.
pub fn run_episode_votes(
    a: &ValidatedAssignment,
    profiles: &[NodeProfile],
    g_norm: &NormalizedTrust,
    atk: &AttackConfig,
    leads_per_episode: usize,
    rng: &DeterministicRng,
) -> BlockVerificationTable {
    let shards = a
        .all_members()
        .iter()
        .enumerate()
        .map(|(x, members)| {
            let mut srng = rng.split(&format!("votes/shard-{x}"));
            shard_votes(x, members, profiles, g_norm, atk, leads_per_episode, &mut srng)
        })
        .collect();
    BlockVerificationTable::from_shards(a.num_nodes(), shards)
}

fn shard_votes(
    shard: usize,
    members: &[usize],
    profiles: &[NodeProfile],
    g_norm: &NormalizedTrust,
    atk: &AttackConfig,
    leads: usize,
    rng: &mut DeterministicRng,
) -> ShardVotes {
    let dishonest = members.iter().filter(|&&m| profiles[m].is_dishonest()).count();
    let frac = if members.is_empty() { 0.0 } else { dishonest as f64 / members.len() as f64 };
    let colluding = frac >= atk.tau;

    let schedule: Vec<usize> = (0..leads).flat_map(|_| members.iter().copied()).collect();
    let votes = schedule
        .iter()
        .map(|&leader| {
            let lp = &profiles[leader];
            // colluding leaders propose blocks honest validators reject
            let block_ok = !(lp.is_dishonest() && colluding);
            members
                .iter()
                .map(|&voter| {
                    // both draws are always taken so the stream layout is fixed
                    let r_loss: f64 = rng.random();
                    let r_vote: f64 = rng.random();
                    if voter == leader {
                        return VoteOutcome::Valid;
                    }
                    if r_loss < atk.fail_prob {
                        return VoteOutcome::Missing;
                    }
                    let p = vote_probability(&profiles[voter], lp, g_norm, block_ok, frac, atk);
                    let delivered = 1.0 - atk.fail_prob;
                    if r_vote * delivered < p {
                        VoteOutcome::Valid
                    } else {
                        VoteOutcome::Invalid
                    }
                })
                .collect()
        })
        .collect();
    ShardVotes {
        shard,
        members: members.to_vec(),
        schedule,
        votes,
        dishonest_fraction: frac,
    }
}
