//! Comparison strategies: random deal, Kernighan-Lin community partition,
//! and serpentine trust deal.

use rand::seq::SliceRandom;

use crate::assignment::{validate_with, ShardAssignment};
use crate::config::SimConfig;
use crate::env::Snapshot;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;
use crate::strategy::{Proposal, ReshardingStrategy};
use crate::txmatrix::TransactionMatrix;

/// Uniformly random permutation dealt round-robin, so sizes differ by at
/// most one.
pub fn random_assignment(n: usize, d: usize, rng: &mut DeterministicRng) -> ShardAssignment {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    ShardAssignment::dealt(&order, d)
}

/// Cut weight of an allocation: total transactions between different shards.
pub fn cut_weight(tx: &TransactionMatrix, a: &[usize]) -> u64 {
    let n = tx.n();
    let mut cut = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if a[i] != a[j] {
                cut += tx.get(i, j);
            }
        }
    }
    cut
}

/// Kernighan-Lin refinement of the bisection `(left, right)` of `nodes`
/// (given as `side[k]`, `true` = left, for `k` indexing `nodes`). Each pass
/// tentatively swaps pairs with the best gain, then commits the prefix of
/// swaps with the largest cumulative gain if it is positive. Sizes are
/// preserved.
pub fn kl_bisect(tx: &TransactionMatrix, nodes: &[usize], side: &mut [bool], max_passes: usize) {
    let m = nodes.len();
    let w = |a: usize, b: usize| tx.get(nodes[a], nodes[b]) as i64;
    for _ in 0..max_passes {
        // D = external - internal cost
        let mut dval: Vec<i64> = (0..m)
            .map(|a| {
                (0..m)
                    .filter(|&b| b != a)
                    .map(|b| if side[a] != side[b] { w(a, b) } else { -w(a, b) })
                    .sum()
            })
            .collect();
        let mut locked = vec![false; m];
        let mut cur = side.to_vec();
        let mut swaps = Vec::new();
        let mut gains = Vec::new();
        loop {
            let mut best: Option<(i64, usize, usize)> = None;
            for a in (0..m).filter(|&a| !locked[a] && cur[a]) {
                for b in (0..m).filter(|&b| !locked[b] && !cur[b]) {
                    let g = dval[a] + dval[b] - 2 * w(a, b);
                    if best.is_none_or(|(bg, _, _)| g > bg) {
                        best = Some((g, a, b));
                    }
                }
            }
            let Some((g, a, b)) = best else { break };
            locked[a] = true;
            locked[b] = true;
            // update D for unlocked nodes as if a and b had swapped
            for k in (0..m).filter(|&k| !locked[k]) {
                let (wa, wb) = (w(k, a), w(k, b));
                if cur[k] == cur[a] {
                    dval[k] += 2 * wa - 2 * wb;
                } else {
                    dval[k] += 2 * wb - 2 * wa;
                }
            }
            cur[a] = false;
            cur[b] = true;
            swaps.push((a, b));
            gains.push(g);
        }
        let mut best_k = 0;
        let mut best_sum = 0;
        let mut acc = 0;
        for (k, g) in gains.iter().enumerate() {
            acc += g;
            if acc > best_sum {
                best_sum = acc;
                best_k = k + 1;
            }
        }
        if best_k == 0 {
            break;
        }
        for &(a, b) in &swaps[..best_k] {
            side[a] = false;
            side[b] = true;
        }
    }
}

/// Balanced partition refined by Kernighan-Lin; more than two shards use
/// recursive bisection. `start` must be size-balanced. Never returns a
/// partition with a larger cut than `start`.
pub fn community_partition(tx: &TransactionMatrix, start: &ShardAssignment, d: usize, sweeps: usize) -> ShardAssignment {
    let n = start.len();
    let mut out = vec![0; n];
    // target sizes: the first n % d shards get one extra node
    let targets: Vec<usize> = (0..d).map(|x| n / d + usize::from(x < n % d)).collect();
    // order nodes by starting shard so the first bisection begins at `start`
    let mut nodes: Vec<usize> = (0..n).collect();
    let mut start_sorted = start.clone();
    // relabel start so that shard sizes line up with `targets` (largest first)
    let mut by_size: Vec<usize> = (0..d).collect();
    let sizes = start.sizes(d);
    by_size.sort_by_key(|&x| (std::cmp::Reverse(sizes[x]), x));
    let mut relabel = vec![0; d];
    for (new, &old) in by_size.iter().enumerate() {
        relabel[old] = new;
    }
    for s in start_sorted.0.iter_mut() {
        *s = relabel[*s];
    }
    nodes.sort_by_key(|&i| (start_sorted.0[i], i));
    bisect_rec(tx, &nodes, &targets, 0, sweeps, &mut out);

    let result = ShardAssignment(out);
    if cut_weight(tx, &result.0) <= cut_weight(tx, &start.0) {
        result
    } else {
        start.clone()
    }
}

fn bisect_rec(tx: &TransactionMatrix, nodes: &[usize], targets: &[usize], first: usize, sweeps: usize, out: &mut [usize]) {
    if targets.len() == 1 {
        for &i in nodes {
            out[i] = first;
        }
        return;
    }
    let k1 = targets.len() / 2;
    let left_size: usize = targets[..k1].iter().sum();
    let mut side: Vec<bool> = (0..nodes.len()).map(|k| k < left_size).collect();
    kl_bisect(tx, nodes, &mut side, sweeps);
    let left: Vec<usize> = nodes.iter().zip(&side).filter(|(_, &s)| s).map(|(&i, _)| i).collect();
    let right: Vec<usize> = nodes.iter().zip(&side).filter(|(_, &s)| !s).map(|(&i, _)| i).collect();
    bisect_rec(tx, &left, &targets[..k1], first, sweeps, out);
    bisect_rec(tx, &right, &targets[k1..], first + k1, sweeps, out);
}

/// Sorts nodes by trust (descending, ties by id) and deals them
/// forward-then-backward across the shards.
pub fn serpentine_assignment(trust: &[f64], d: usize) -> ShardAssignment {
    let mut order: Vec<usize> = (0..trust.len()).collect();
    order.sort_by(|&a, &b| trust[b].total_cmp(&trust[a]).then(a.cmp(&b)));
    let mut v = vec![0; trust.len()];
    for (rank, &node) in order.iter().enumerate() {
        let round = rank / d;
        let pos = rank % d;
        v[node] = if round.is_multiple_of(2) { pos } else { d - 1 - pos };
    }
    ShardAssignment(v)
}

fn checked(a: ShardAssignment, cfg: &SimConfig, name: &str) -> Result<Proposal> {
    let net = &cfg.network;
    validate_with(&a, net.n_total, net.d_shards, net.n_min).map_err(|e| Error::Strategy {
        strategy: name.into(),
        reason: e.to_string(),
    })?;
    Ok(Proposal::plain(a))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomStrategy;

impl ReshardingStrategy for RandomStrategy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose(&mut self, snap: &Snapshot, cfg: &SimConfig, rng: &mut DeterministicRng) -> Result<Proposal> {
        let a = random_assignment(snap.num_nodes(), cfg.network.d_shards, rng);
        checked(a, cfg, self.name())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CommunityStrategy;

impl ReshardingStrategy for CommunityStrategy {
    fn name(&self) -> &'static str {
        "community"
    }

    fn propose(&mut self, snap: &Snapshot, cfg: &SimConfig, rng: &mut DeterministicRng) -> Result<Proposal> {
        let d = cfg.network.d_shards;
        let start = random_assignment(snap.num_nodes(), d, rng);
        let a = community_partition(&snap.tx, &start, d, cfg.baselines.kl_sweeps);
        checked(a, cfg, self.name())
    }
}

/// Serpentine deal over global trust; a stand-in for published trust-based
/// sharding, whose exact procedure is not public.
#[derive(Debug, Default, Clone, Copy)]
pub struct TrustStrategy;

impl ReshardingStrategy for TrustStrategy {
    fn name(&self) -> &'static str {
        "trust"
    }

    fn propose(&mut self, snap: &Snapshot, cfg: &SimConfig, _rng: &mut DeterministicRng) -> Result<Proposal> {
        let a = serpentine_assignment(&snap.gtt.g, cfg.network.d_shards);
        checked(a, cfg, self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::new_rng;

    fn spread(a: &ShardAssignment, d: usize) -> usize {
        let s = a.sizes(d);
        s.iter().max().unwrap() - s.iter().min().unwrap()
    }

    #[test]
    fn random_sizes() {
        let a = random_assignment(16, 2, &mut new_rng(1, "r"));
        assert_eq!(a.sizes(2), vec![8, 8]);
        let mut s = random_assignment(9, 2, &mut new_rng(1, "r")).sizes(2);
        s.sort();
        assert_eq!(s, vec![4, 5]);
        assert_eq!(random_assignment(16, 2, &mut new_rng(5, "r")), random_assignment(16, 2, &mut new_rng(5, "r")));
    }

    fn two_communities(n: usize) -> TransactionMatrix {
        let mut tx = TransactionMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if (i % 2) == (j % 2) {
                    tx.set(i, j, 5);
                }
            }
        }
        tx
    }

    #[test]
    fn kl_recovers_planted_communities() {
        let tx = two_communities(12);
        for seed in 0..10 {
            let start = random_assignment(12, 2, &mut new_rng(seed, "r"));
            let a = community_partition(&tx, &start, 2, 10);
            assert_eq!(cut_weight(&tx, &a.0), 0, "seed {seed}");
            assert!((0..12).all(|i| a.0[i] == a.0[i % 2]));
        }
    }

    #[test]
    fn planted_split_is_unique_zero_cut_balanced_partition() {
        // brute force over all balanced bisections of 8 nodes
        let tx = two_communities(8);
        let mut zero_cut = 0;
        for mask in 0u32..(1 << 8) {
            if mask.count_ones() != 4 || mask & 1 == 0 {
                continue;
            }
            let a: Vec<usize> = (0..8).map(|i| ((mask >> i) & 1) as usize).collect();
            if cut_weight(&tx, &a) == 0 {
                zero_cut += 1;
            }
        }
        assert_eq!(zero_cut, 1);
    }

    #[test]
    fn zero_matrix_gives_balanced_split() {
        let tx = TransactionMatrix::zeros(10);
        let start = random_assignment(10, 2, &mut new_rng(0, "r"));
        let a = community_partition(&tx, &start, 2, 10);
        assert_eq!(spread(&a, 2), 0);
    }

    #[test]
    fn kl_never_worsens_cut() {
        use crate::assignment::sample_profiles;
        use crate::config::TxConfig;
        for seed in 0..20 {
            let prof = sample_profiles(14, 3, &mut new_rng(seed, "p"));
            let tx = crate::txmatrix::generate(&prof, &TxConfig::default(), &mut new_rng(seed, "tx"));
            for d in [2, 3] {
                let start = random_assignment(14, d, &mut new_rng(seed, "r"));
                let a = community_partition(&tx, &start, d, 10);
                assert!(cut_weight(&tx, &a.0) <= cut_weight(&tx, &start.0));
                assert!(spread(&a, d) <= 1);
            }
        }
    }

    #[test]
    fn recursive_bisection_three_communities() {
        let mut tx = TransactionMatrix::zeros(12);
        for i in 0..12 {
            for j in (i + 1)..12 {
                if i % 3 == j % 3 {
                    tx.set(i, j, 4);
                }
            }
        }
        let start = random_assignment(12, 3, &mut new_rng(3, "r"));
        let a = community_partition(&tx, &start, 3, 10);
        assert_eq!(cut_weight(&tx, &a.0), 0);
    }

    #[test]
    fn serpentine_example() {
        let g = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];
        let a = serpentine_assignment(&g, 2);
        assert_eq!(a.0, vec![0, 1, 1, 0, 0, 1, 1, 0]);
        let mean = |x: usize| (0..8).filter(|&i| a.0[i] == x).map(|i| g[i]).sum::<f64>() / 4.0;
        assert!((mean(0) - mean(1)).abs() < 1e-12);
    }

    #[test]
    fn serpentine_ties_break_by_id() {
        let a = serpentine_assignment(&[0.5; 6], 3);
        assert_eq!(a.0, vec![0, 1, 2, 2, 1, 0]);
    }

    #[test]
    fn serpentine_separates_low_trust_nodes() {
        // h low-trust nodes with h <= d never share a shard when the last
        // round of the deal is full (enumerated)
        for d in 1..=4usize {
            for h in 0..=d {
                for n in [d * 4, d * 5, d * 6] {
                    let mut g = vec![0.9; n];
                    for (k, v) in g.iter_mut().rev().take(h).enumerate() {
                        *v = 0.1 + k as f64 * 0.01;
                    }
                    let a = serpentine_assignment(&g, d);
                    let mut seen = vec![0; d];
                    for i in (n - h)..n {
                        seen[a.0[i]] += 1;
                    }
                    assert!(seen.iter().all(|&c| c <= 1), "d={d} h={h} n={n}");
                }
            }
        }
    }
}
