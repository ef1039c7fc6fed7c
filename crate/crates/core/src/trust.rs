//! Local and global trust tables.
//!
//! Row `i` of the local table holds the scores node `i` sends about every
//! other node. Within a shard a score mixes indirect feedback (how the
//! leader fared with the rest of the shard), direct feedback (how the scored
//! node voted when `i` led) and the scored node's previous global trust;
//! across shards only the previous global trust is used. A node's global
//! trust is the mean cosine similarity of its row against all rows.

use serde::{Deserialize, Serialize};

use crate::assignment::ValidatedAssignment;
use crate::config::TrustConfig;
use crate::consensus::{normalize_trust, BlockVerificationTable, NormalizedTrust};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTrustTable {
    n: usize,
    pub episode: usize,
    l: Vec<f64>,
}

impl LocalTrustTable {
    pub fn from_rows(rows: Vec<Vec<f64>>, episode: usize) -> Result<Self> {
        let n = rows.len();
        let mut l = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len() });
            }
            l.extend(r);
        }
        Ok(Self { n, episode, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..(i + 1) * self.n]
    }

    pub fn scale_row(&mut self, i: usize, c: f64) {
        let n = self.n;
        self.l[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= c);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTrustTable {
    pub episode: usize,
    pub g: Vec<f64>,
}

impl GlobalTrustTable {
    /// Episode-0 table: every node fully trusted.
    pub fn initial(n: usize) -> Self {
        Self { episode: 0, g: vec![1.0; n] }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.g[i]
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Fraction of valid votes a leader collected over all rounds it led,
/// counted against every shard member (self-votes included).
pub fn leader_pass_ratio(bvt: &BlockVerificationTable, j: usize) -> Result<f64> {
    let led = bvt.led(j);
    if led == 0 {
        return Err(Error::NeverLed { node: j });
    }
    let members = bvt.members_of(j);
    let valid: u32 = members.iter().map(|&i| bvt.valid_votes(i, j)).sum();
    Ok(valid as f64 / (led as f64 * members.len() as f64))
}

/// Indirect feedback of `i` about leader `j`:
/// `gamma * V_j + gamma^2 / (N_x - 2) * sum_p delta_pj * V_p^(iota_j - delta_pj + 1)`
/// over shard members `p` other than `i` and `j`. Not clamped.
pub fn indirect_feedback(bvt: &BlockVerificationTable, i: usize, j: usize, cfg: &TrustConfig) -> Result<f64> {
    if !bvt.same_shard(i, j) {
        return Err(Error::DifferentShards { i, j });
    }
    let members = bvt.members_of(j);
    let nx = members.len();
    if nx <= 2 {
        return Err(Error::ShardTooSmallForIndirect { size: nx });
    }
    let v_j = leader_pass_ratio(bvt, j)?;
    let iota_j = bvt.led(j) as f64;
    let mut acc = 0.0;
    for &p in members.iter().filter(|&&p| p != i && p != j) {
        let delta = bvt.nonempty_ratio(p, j);
        let v_p = leader_pass_ratio(bvt, p)?;
        // powf(0, 0) == 1
        acc += delta * v_p.powf(iota_j - delta + 1.0);
    }
    let g = cfg.gamma;
    Ok(g * v_j + g * g / (nx as f64 - 2.0) * acc)
}

/// Fraction of `i`'s leader rounds in which `j` voted valid.
pub fn direct_feedback(bvt: &BlockVerificationTable, i: usize, j: usize) -> Result<f64> {
    if !bvt.same_shard(i, j) {
        return Err(Error::DifferentShards { i, j });
    }
    match bvt.led(i) {
        0 => Err(Error::NeverLed { node: i }),
        led => Ok(bvt.valid_votes(j, i) as f64 / led as f64),
    }
}

/// Builds the local trust table for an episode.
///
/// Indirect feedback can exceed 1 (its two terms sum to up to
/// `gamma + gamma^2`), so it is clamped to `[0, 1]` before mixing. Shards of
/// two or fewer nodes fall back to `gamma * V_j`.
pub fn build_ltt(
    bvt: &BlockVerificationTable,
    g_prev: &GlobalTrustTable,
    a: &ValidatedAssignment,
    cfg: &TrustConfig,
) -> Result<LocalTrustTable> {
    let n = a.num_nodes();
    if bvt.num_nodes() != n || g_prev.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g_prev.len().min(bvt.num_nodes()) });
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            l[i * n + j] = if a.same_shard(i, j) {
                let indirect = match indirect_feedback(bvt, i, j, cfg) {
                    Ok(f) => f,
                    Err(Error::ShardTooSmallForIndirect { .. }) => cfg.gamma * leader_pass_ratio(bvt, j)?,
                    Err(e) => return Err(e),
                };
                cfg.alpha * indirect.clamp(0.0, 1.0) + cfg.beta * direct_feedback(bvt, i, j)? + cfg.mu * g_prev.get(j)
            } else {
                g_prev.get(j)
            };
        }
    }
    Ok(LocalTrustTable {
        n,
        episode: g_prev.episode + 1,
        l,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity of two rows; 0 if either row is all zeros.
pub fn row_similarity(l: &LocalTrustTable, i: usize, j: usize) -> f64 {
    let (a, b) = (l.row(i), l.row(j));
    cosine(a, b, dot(a, a).sqrt(), dot(b, b).sqrt())
}

/// Global trust: each node's mean row similarity against all rows,
/// itself included.
pub fn build_gtt(l: &LocalTrustTable) -> GlobalTrustTable {
    let n = l.n();
    let norms: Vec<f64> = (0..n).map(|i| dot(l.row(i), l.row(i)).sqrt()).collect();
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = cosine(l.row(i), l.row(j), norms[i], norms[j]);
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    let g = (0..n).map(|i| sim[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    GlobalTrustTable { episode: l.episode, g }
}

/// Trust carried across episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    pub gtt: GlobalTrustTable,
    pub normalized: NormalizedTrust,
    pub ltt: Option<LocalTrustTable>,
    pub history: Vec<Vec<f64>>,
}

impl TrustState {
    pub fn initial(n: usize) -> Self {
        Self {
            gtt: GlobalTrustTable::initial(n),
            normalized: NormalizedTrust::ones(n),
            ltt: None,
            history: Vec::new(),
        }
    }

    /// Folds one episode's vote table into the trust state.
    pub fn update(&mut self, bvt: &BlockVerificationTable, a: &ValidatedAssignment, cfg: &TrustConfig) -> Result<()> {
        let ltt = build_ltt(bvt, &self.gtt, a, cfg)?;
        let gtt = build_gtt(&ltt);
        self.history.push(self.gtt.g.clone());
        self.normalized = normalize_trust(&gtt.g)?;
        self.gtt = gtt;
        self.ltt = Some(ltt);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{validate_with, Honesty, NodeProfile, ShardAssignment};
    use crate::consensus::{run_episode_votes, ShardVotes, VoteOutcome};
    use crate::config::AttackConfig;
    use crate::rng::new_rng;

    fn all_valid_bvt(n: usize, leads: usize) -> BlockVerificationTable {
        let members: Vec<usize> = (0..n).collect();
        let schedule: Vec<usize> = (0..leads).flat_map(|_| members.clone()).collect();
        let votes = vec![vec![VoteOutcome::Valid; n]; schedule.len()];
        BlockVerificationTable::from_shards(
            n,
            vec![ShardVotes { shard: 0, members, schedule, votes, dishonest_fraction: 0.0 }],
        )
    }

    fn cfg() -> TrustConfig {
        TrustConfig::default()
    }

    #[test]
    fn pass_ratio_all_valid() {
        assert_eq!(leader_pass_ratio(&all_valid_bvt(8, 2), 3).unwrap(), 1.0);
    }

    #[test]
    fn pass_ratio_only_self_votes() {
        let mut bvt = all_valid_bvt(8, 2);
        for (r, &leader) in bvt.shards[0].schedule.clone().iter().enumerate() {
            for k in 0..8 {
                if k != leader {
                    bvt.shards[0].votes[r][k] = VoteOutcome::Missing;
                }
            }
        }
        let bvt = BlockVerificationTable::from_shards(8, bvt.shards);
        assert_eq!(leader_pass_ratio(&bvt, 0).unwrap(), 0.125);
    }

    #[test]
    fn pass_ratio_never_led() {
        let mut bvt = all_valid_bvt(4, 1);
        bvt.shards[0].schedule.pop();
        bvt.shards[0].votes.pop();
        let bvt = BlockVerificationTable::from_shards(4, bvt.shards);
        assert_eq!(leader_pass_ratio(&bvt, 3), Err(Error::NeverLed { node: 3 }));
    }

    #[test]
    fn indirect_on_all_ones_table() {
        let f = indirect_feedback(&all_valid_bvt(8, 1), 0, 1, &cfg()).unwrap();
        assert!((f - 1.71).abs() < 1e-12);
    }

    #[test]
    fn indirect_without_witnesses_is_gamma_v() {
        let mut bvt = all_valid_bvt(5, 1);
        // every non-leader vote for leader 1 lost
        for k in 0..5 {
            if k != 1 {
                bvt.shards[0].votes[1][k] = VoteOutcome::Missing;
            }
        }
        let bvt = BlockVerificationTable::from_shards(5, bvt.shards);
        let v1 = leader_pass_ratio(&bvt, 1).unwrap();
        let f = indirect_feedback(&bvt, 0, 1, &cfg()).unwrap();
        assert!((f - 0.9 * v1).abs() < 1e-12);
    }

    #[test]
    fn indirect_two_node_shard_errors() {
        assert_eq!(
            indirect_feedback(&all_valid_bvt(2, 1), 0, 1, &cfg()),
            Err(Error::ShardTooSmallForIndirect { size: 2 })
        );
    }

    #[test]
    fn direct_feedback_cases() {
        let bvt = all_valid_bvt(4, 2);
        assert_eq!(direct_feedback(&bvt, 0, 1).unwrap(), 1.0);

        let mut shards = bvt.shards.clone();
        // leader 0 leads rounds 0 and 4; node 1 votes valid in only one
        shards[0].votes[4][1] = VoteOutcome::Invalid;
        let half = BlockVerificationTable::from_shards(4, shards.clone());
        assert_eq!(direct_feedback(&half, 0, 1).unwrap(), 0.5);

        shards[0].votes[0][1] = VoteOutcome::Missing;
        shards[0].votes[4][1] = VoteOutcome::Missing;
        let none = BlockVerificationTable::from_shards(4, shards);
        assert_eq!(direct_feedback(&none, 0, 1).unwrap(), 0.0);
    }

    fn two_shards(n: usize) -> ValidatedAssignment {
        validate_with(&ShardAssignment((0..n).map(|i| i * 2 / n).collect()), n, 2, 4).unwrap()
    }

    fn honest(n: usize) -> Vec<NodeProfile> {
        (0..n).map(|id| NodeProfile { id, honesty: Honesty::Honest }).collect()
    }

    #[test]
    fn first_episode_all_honest_is_all_ones() {
        let a = two_shards(16);
        let atk = AttackConfig { fail_prob: 0.0, ..AttackConfig::default() };
        let bvt = run_episode_votes(&a, &honest(16), &NormalizedTrust::ones(16), &atk, 1, &new_rng(0, "v"));
        let ltt = build_ltt(&bvt, &GlobalTrustTable::initial(16), &a, &cfg()).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert!((ltt.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
        assert!(build_gtt(&ltt).g.iter().all(|&g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cross_shard_entries_inherit_previous_trust() {
        let a = two_shards(8);
        let atk = AttackConfig::default();
        let bvt = run_episode_votes(&a, &honest(8), &NormalizedTrust::ones(8), &atk, 1, &new_rng(0, "v"));
        let prev = GlobalTrustTable { episode: 3, g: (0..8).map(|i| 0.5 + i as f64 / 20.0).collect() };
        let ltt = build_ltt(&bvt, &prev, &a, &cfg()).unwrap();
        assert_eq!(ltt.get(0, 5), prev.g[5]);
        assert_eq!(ltt.get(6, 2), prev.g[2]);
        assert_eq!(ltt.episode, 4);
    }

    #[test]
    fn alpha_only_is_clamped_indirect() {
        let a = two_shards(8);
        let atk = AttackConfig::default();
        let prof: Vec<NodeProfile> = (0..8)
            .map(|id| NodeProfile { id, honesty: if id < 2 { Honesty::Dishonest } else { Honesty::Honest } })
            .collect();
        let bvt = run_episode_votes(&a, &prof, &NormalizedTrust::ones(8), &atk, 2, &new_rng(4, "v"));
        let c = TrustConfig { alpha: 1.0, beta: 0.0, mu: 0.0, ..cfg() };
        let ltt = build_ltt(&bvt, &GlobalTrustTable::initial(8), &a, &c).unwrap();
        let f = indirect_feedback(&bvt, 0, 2, &c).unwrap().clamp(0.0, 1.0);
        assert_eq!(ltt.get(0, 2), f);
    }

    #[test]
    fn cosine_examples() {
        let l = LocalTrustTable::from_rows(vec![vec![1.0, 1.0], vec![1.0, 0.0]], 1).unwrap();
        assert!((row_similarity(&l, 0, 0) - 1.0).abs() < 1e-12);
        assert!((row_similarity(&l, 0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let g = build_gtt(&l);
        let expect = (1.0 + 1.0 / 2f64.sqrt()) / 2.0;
        assert!((g.g[0] - expect).abs() < 1e-12 && (g.g[1] - expect).abs() < 1e-12);

        let o = LocalTrustTable::from_rows(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0; 3]], 1).unwrap();
        assert_eq!(row_similarity(&o, 0, 1), 0.0);
        assert_eq!(row_similarity(&o, 0, 2), 0.0);
    }

    #[test]
    fn one_orthogonal_row() {
        let n = 5;
        let mut rows = vec![vec![0.0, 1.0, 1.0, 1.0, 1.0]; n];
        rows[0] = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let g = build_gtt(&LocalTrustTable::from_rows(rows, 1).unwrap());
        assert!((g.g[0] - 1.0 / n as f64).abs() < 1e-12);
        for i in 1..n {
            assert!((g.g[i] - (n as f64 - 1.0) / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_inheritance_gives_unit_trust() {
        let a = two_shards(8);
        let bvt = run_episode_votes(&a, &honest(8), &NormalizedTrust::ones(8), &AttackConfig::default(), 1, &new_rng(1, "v"));
        let prev = GlobalTrustTable { episode: 1, g: vec![0.9, 0.8, 0.95, 0.7, 0.6, 0.99, 0.85, 0.75] };
        let c = TrustConfig { alpha: 0.0, beta: 0.0, mu: 1.0, ..cfg() };
        let ltt = build_ltt(&bvt, &prev, &a, &c).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(ltt.get(i, j), prev.g[j]);
            }
        }
        assert!(build_gtt(&ltt).g.iter().all(|&g| (g - 1.0).abs() < 1e-12));
    }
}
