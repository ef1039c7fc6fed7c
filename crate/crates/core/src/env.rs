//! Episode state machine: vote, update trust, evaluate risk, reshard on
//! trigger, record metrics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{sample_profiles, validate_assignment, validate_with, NodeProfile, ShardAssignment, ValidatedAssignment};
use crate::config::{Placement, SimConfig};
use crate::consensus::{run_episode_votes, BlockVerificationTable, NormalizedTrust};
use crate::error::{Error, Result};
use crate::metrics::episode_throughput;
use crate::reward::{score_proposal, total_reward, RewardBreakdown, ScoredProposal};
use crate::risk::{evaluate, RiskReport, TriggerReason};
use crate::rng::{new_rng, DeterministicRng};
use crate::strategy::ReshardingStrategy;
use crate::trust::{GlobalTrustTable, TrustState};
use crate::txmatrix::{cst_stats, generate, TransactionMatrix};

/// Frozen view handed to strategies and used for virtual reward evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub g_norm: NormalizedTrust,
    pub gtt: GlobalTrustTable,
    pub tx: TransactionMatrix,
    pub assignment: ShardAssignment,
    pub profiles: Vec<NodeProfile>,
}

impl Snapshot {
    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }
}

/// Scores a proposal against the snapshot without touching live state.
pub fn virtual_reward(snap: &Snapshot, proposal: &ShardAssignment, cfg: &SimConfig) -> Result<RewardBreakdown> {
    total_reward(&snap.gtt, &snap.tx, &snap.assignment, proposal, cfg)
}

/// Scalar training signal: the total reward, or the fixed violation penalty
/// for proposals breaking the shard minimum.
pub fn virtual_reward_value(snap: &Snapshot, proposal: &ShardAssignment, cfg: &SimConfig) -> f64 {
    match virtual_reward(snap, proposal, cfg) {
        Ok(b) => b.total,
        Err(_) => cfg.reward.violation_penalty(),
    }
}

/// Per node: one-hot shard (D), normalized trust (1), share of the node's
/// transactions going to each shard (D). Length `N * (2D + 1)`.
pub fn encode_state(snap: &Snapshot, d: usize) -> Vec<f64> {
    let n = snap.num_nodes();
    let a = &snap.assignment.0;
    let mut out = Vec::with_capacity(n * (2 * d + 1));
    for i in 0..n {
        out.extend((0..d).map(|x| if a[i] == x { 1.0 } else { 0.0 }));
        out.push(snap.g_norm.get(i));
        let row = snap.tx.row(i);
        let total: u64 = row.iter().sum();
        let mut per = vec![0.0; d];
        for (j, &w) in row.iter().enumerate() {
            per[a[j]] += w as f64;
        }
        if total > 0 {
            per.iter_mut().for_each(|v| *v /= total as f64);
        }
        out.extend(per);
    }
    out
}

/// Builds a snapshot without an [`Environment`]: profiles, a shuffled
/// balanced allocation and `warmup` episodes of voting and trust updates on
/// a fixed allocation. Only the structural parts of `cfg` are checked
/// (`n_min` may be below the usual floor), which makes it usable for small
/// oracle instances.
pub fn random_snapshot(cfg: &SimConfig, warmup: usize) -> Result<Snapshot> {
    let net = &cfg.network;
    let (n, d) = (net.n_total, net.d_shards);
    if d == 0 || net.n_min == 0 || n < d * net.n_min {
        return Err(Error::config("network", "n_total must be at least d_shards * n_min with n_min >= 1"));
    }
    let seed = net.seed;
    let profiles = sample_profiles(n, cfg.attack.h_dishonest, &mut new_rng(seed, "profiles"));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut new_rng(seed, "init"));
    let a = validate_with(&ShardAssignment::dealt(&order, d), n, d, net.n_min)?;
    let mut trust = TrustState::initial(n);
    for ep in 1..=warmup {
        let bvt = run_episode_votes(
            &a,
            &profiles,
            &trust.normalized,
            &cfg.attack,
            net.leads_per_episode,
            &new_rng(seed, &format!("ep{ep}")),
        );
        trust.update(&bvt, &a, &cfg.trust)?;
    }
    let tx = generate(&profiles, &cfg.tx, &mut new_rng(seed, &format!("tx/ep{}", warmup + 1)));
    Ok(Snapshot {
        g_norm: trust.normalized,
        gtt: trust.gtt,
        tx,
        assignment: a.assignment().clone(),
        profiles,
    })
}

/// Everything recorded about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Evaluator output on the allocation the episode ran under.
    pub report: RiskReport,
    /// The applied allocation scored against the episode snapshot.
    pub applied: ScoredProposal,
    pub assignment: ShardAssignment,
    pub throughput: f64,
    pub strategy_called: bool,
    pub repaired: bool,
    pub fallback: bool,
    pub gtt: Vec<f64>,
    pub snapshot: Snapshot,
}

impl EpisodeRecord {
    pub fn reason(&self) -> TriggerReason {
        self.report.reason
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub episode: usize,
    pub assignment: ValidatedAssignment,
    pub trust: TrustState,
    pub tx: TransactionMatrix,
    pub last_report: Option<RiskReport>,
}

/// One simulated network with fixed node set and parameters.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: SimConfig,
    profiles: Vec<NodeProfile>,
    state: EpisodeState,
    strategy_calls: usize,
    last_bvt: Option<BlockVerificationTable>,
}

fn initial_assignment(cfg: &SimConfig, profiles: &[NodeProfile], rng: &mut DeterministicRng) -> ShardAssignment {
    let n = cfg.network.n_total;
    let d = cfg.network.d_shards;
    match cfg.attack.placement {
        Placement::Scattered => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            ShardAssignment::dealt(&order, d)
        }
        Placement::Concentrated => {
            let mut order: Vec<usize> = profiles.iter().filter(|p| p.is_dishonest()).map(|p| p.id).collect();
            let mut honest: Vec<usize> = profiles.iter().filter(|p| !p.is_dishonest()).map(|p| p.id).collect();
            honest.shuffle(rng);
            order.extend(honest);
            // contiguous blocks of balanced sizes
            let mut v = vec![0; n];
            let mut pos = 0;
            for x in 0..d {
                let size = n / d + usize::from(x < n % d);
                for &node in &order[pos..pos + size] {
                    v[node] = x;
                }
                pos += size;
            }
            ShardAssignment(v)
        }
    }
}

impl Environment {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.network.seed;
        let n = cfg.network.n_total;
        let profiles = sample_profiles(n, cfg.attack.h_dishonest, &mut new_rng(seed, "profiles"));
        let a = initial_assignment(&cfg, &profiles, &mut new_rng(seed, "init"));
        let assignment = validate_assignment(&a, &cfg.network)?;
        let tx = generate(&profiles, &cfg.tx, &mut new_rng(seed, "tx/ep1"));
        Ok(Self {
            state: EpisodeState {
                episode: 0,
                assignment,
                trust: TrustState::initial(n),
                tx,
                last_report: None,
            },
            cfg,
            profiles,
            strategy_calls: 0,
            last_bvt: None,
        })
    }

    /// Replaces the current allocation (e.g. for scripted scenarios).
    pub fn set_assignment(&mut self, a: &ShardAssignment) -> Result<()> {
        self.state.assignment = validate_assignment(a, &self.cfg.network)?;
        Ok(())
    }

    pub fn set_tx(&mut self, tx: TransactionMatrix) -> Result<()> {
        if tx.n() != self.cfg.network.n_total {
            return Err(Error::DimensionMismatch { expected: self.cfg.network.n_total, got: tx.n() });
        }
        self.state.tx = tx;
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn profiles(&self) -> &[NodeProfile] {
        &self.profiles
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn strategy_calls(&self) -> usize {
        self.strategy_calls
    }

    pub fn last_bvt(&self) -> Option<&BlockVerificationTable> {
        self.last_bvt.as_ref()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            g_norm: self.state.trust.normalized.clone(),
            gtt: self.state.trust.gtt.clone(),
            tx: self.state.tx.clone(),
            assignment: self.state.assignment.assignment().clone(),
            profiles: self.profiles.clone(),
        }
    }

    /// Runs one episode. Strategy errors keep the current allocation and set
    /// `fallback` on the record.
    pub fn step_episode(&mut self, strategy: &mut dyn ReshardingStrategy) -> Result<EpisodeRecord> {
        let cfg = &self.cfg;
        let episode = self.state.episode + 1;
        let seed = cfg.network.seed;
        let ep_rng = new_rng(seed, &format!("ep{episode}"));

        let bvt = run_episode_votes(
            &self.state.assignment,
            &self.profiles,
            &self.state.trust.normalized,
            &cfg.attack,
            cfg.network.leads_per_episode,
            &ep_rng,
        );
        self.state.trust.update(&bvt, &self.state.assignment, &cfg.trust)?;

        let stats = cst_stats(&self.state.tx, &self.state.assignment)?;
        let report = evaluate(&self.state.trust.gtt, &self.state.assignment, &stats, &cfg.trust, &cfg.risk);
        let snapshot = self.snapshot();

        let (mut repaired, mut fallback, mut called) = (false, false, false);
        let mut next = self.state.assignment.clone();
        if report.trigger {
            called = true;
            self.strategy_calls += 1;
            let mut srng = ep_rng.split("strategy");
            match strategy
                .propose(&snapshot, cfg, &mut srng)
                .and_then(|p| validate_assignment(&p.assignment, &cfg.network).map(|v| (v, p.repaired)))
            {
                Ok((v, r)) => {
                    next = v;
                    repaired = r;
                }
                Err(_) => fallback = true,
            }
        }

        let applied = score_proposal(&snapshot.gtt, &snapshot.tx, &snapshot.assignment, next.assignment(), cfg)?;
        let throughput = episode_throughput(&snapshot.tx, &next, &applied.report, &cfg.throughput);

        if cfg.tx.resample {
            self.state.tx = generate(&self.profiles, &cfg.tx, &mut new_rng(seed, &format!("tx/ep{}", episode + 1)));
        }
        let record = EpisodeRecord {
            episode,
            report: report.clone(),
            applied,
            assignment: next.assignment().clone(),
            throughput,
            strategy_called: called,
            repaired,
            fallback,
            gtt: self.state.trust.gtt.g.clone(),
            snapshot,
        };
        self.state.assignment = next;
        self.state.last_report = Some(report);
        self.state.episode = episode;
        self.last_bvt = Some(bvt);
        Ok(record)
    }
}
