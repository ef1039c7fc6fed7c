//! Node identities and node-to-shard allocations.
//!
//! Shard indices are 0-based everywhere.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Honesty {
    Honest,
    Dishonest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub id: usize,
    pub honesty: Honesty,
}

impl NodeProfile {
    pub fn is_dishonest(&self) -> bool {
        self.honesty == Honesty::Dishonest
    }
}

/// Picks `h` dishonest nodes uniformly at random out of `n`.
pub fn sample_profiles(n: usize, h: usize, rng: &mut DeterministicRng) -> Vec<NodeProfile> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut profiles: Vec<NodeProfile> = (0..n)
        .map(|id| NodeProfile { id, honesty: Honesty::Honest })
        .collect();
    for &id in ids.iter().take(h) {
        profiles[id].honesty = Honesty::Dishonest;
    }
    profiles
}

/// Raw allocation vector: entry `i` is the shard of node `i`. May violate the
/// shard minimum; see [`ValidatedAssignment`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShardAssignment(pub Vec<usize>);

impl ShardAssignment {
    pub fn new(v: Vec<usize>) -> Self {
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Per-shard member counts for `d` shards; entries `>= d` are ignored.
    pub fn sizes(&self, d: usize) -> Vec<usize> {
        let mut sizes = vec![0; d];
        for &s in &self.0 {
            if s < d {
                sizes[s] += 1;
            }
        }
        sizes
    }

    /// Deals `order` round-robin into `d` shards: sizes differ by at most one.
    pub fn dealt(order: &[usize], d: usize) -> Self {
        let mut v = vec![0; order.len()];
        for (pos, &node) in order.iter().enumerate() {
            v[node] = pos % d;
        }
        Self(v)
    }
}

/// An allocation that passed [`validate_assignment`], with per-shard member
/// lists (ascending node ids).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedAssignment {
    assignment: ShardAssignment,
    members: Vec<Vec<usize>>,
}

impl ValidatedAssignment {
    pub fn assignment(&self) -> &ShardAssignment {
        &self.assignment
    }

    pub fn shard_of(&self, node: usize) -> usize {
        self.assignment.0[node]
    }

    pub fn members(&self, shard: usize) -> &[usize] {
        &self.members[shard]
    }

    pub fn all_members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn num_shards(&self) -> usize {
        self.members.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn same_shard(&self, i: usize, j: usize) -> bool {
        self.assignment.0[i] == self.assignment.0[j]
    }

    /// Builds the member lists without checking the size minimum. Used where
    /// a partial structure is needed for an assignment already known to be
    /// in range (e.g. scoring a proposal before rejecting it).
    pub(crate) fn unchecked(a: &ShardAssignment, d: usize) -> Self {
        let mut members = vec![Vec::new(); d];
        for (node, &s) in a.0.iter().enumerate() {
            members[s].push(node);
        }
        Self {
            assignment: a.clone(),
            members,
        }
    }
}

/// Checks the allocation against `cfg`: length `n_total`, indices below
/// `d_shards`, and at least `n_min` members per shard.
pub fn validate_assignment(a: &ShardAssignment, cfg: &NetworkConfig) -> Result<ValidatedAssignment> {
    validate_with(a, cfg.n_total, cfg.d_shards, cfg.n_min)
}

pub fn validate_with(a: &ShardAssignment, n: usize, d: usize, n_min: usize) -> Result<ValidatedAssignment> {
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    if let Some((node, &shard)) = a.0.iter().enumerate().find(|(_, &s)| s >= d) {
        return Err(Error::IndexOutOfRange { node, shard, shards: d });
    }
    let v = ValidatedAssignment::unchecked(a, d);
    if let Some((shard, m)) = v.members.iter().enumerate().find(|(_, m)| m.len() < n_min) {
        return Err(Error::ShardTooSmall { shard, size: m.len() });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::new_rng;

    fn net(n: usize, d: usize) -> NetworkConfig {
        NetworkConfig {
            n_total: n,
            d_shards: d,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn even_split_of_sixteen() {
        let a = ShardAssignment((0..16).map(|i| i / 8).collect());
        let v = validate_assignment(&a, &net(16, 2)).unwrap();
        assert_eq!(v.members(0), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(v.members(1).len(), 8);
    }

    #[test]
    fn empty_shard_rejected() {
        let a = ShardAssignment(vec![0; 8]);
        assert_eq!(
            validate_assignment(&a, &net(8, 2)),
            Err(Error::ShardTooSmall { shard: 1, size: 0 })
        );
    }

    #[test]
    fn five_three_split_rejected() {
        let a = ShardAssignment(vec![0, 0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(
            validate_assignment(&a, &net(8, 2)),
            Err(Error::ShardTooSmall { shard: 1, size: 3 })
        );
    }

    #[test]
    fn out_of_range_index() {
        let a = ShardAssignment(vec![0, 0, 0, 0, 1, 1, 1, 2]);
        assert!(matches!(
            validate_assignment(&a, &net(8, 2)),
            Err(Error::IndexOutOfRange { node: 7, shard: 2, .. })
        ));
    }

    #[test]
    fn wrong_length() {
        let a = ShardAssignment(vec![0, 1]);
        assert!(matches!(
            validate_assignment(&a, &net(8, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn profiles_have_exact_dishonest_count() {
        let p = sample_profiles(16, 5, &mut new_rng(3, "profiles"));
        assert_eq!(p.iter().filter(|p| p.is_dishonest()).count(), 5);
        assert!(p.iter().enumerate().all(|(i, p)| p.id == i));
    }

    #[test]
    fn deal_balances_sizes() {
        let order: Vec<usize> = (0..9).rev().collect();
        let a = ShardAssignment::dealt(&order, 2);
        let mut s = a.sizes(2);
        s.sort();
        assert_eq!(s, vec![4, 5]);
    }
}
