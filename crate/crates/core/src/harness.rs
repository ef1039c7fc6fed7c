//! Experiment orchestration and the brute-force optimum oracle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{validate_with, ShardAssignment};
use crate::config::SimConfig;
use crate::env::{virtual_reward, Environment, EpisodeRecord, Snapshot};
use crate::error::{Error, Result};
use crate::metrics::{rows_to_csv, MetricsRow, RunMetrics, RunSummary};
use crate::reward::RewardBreakdown;
use crate::strategy::StrategyKind;

/// Largest search space the oracle will enumerate.
pub const ORACLE_CAP: u64 = 1 << 20;

/// Episodes averaged over in the summary's tail statistics.
pub const SUMMARY_WINDOW: usize = 20;

/// A single, fully resolved run. The number of dishonest nodes and the seed
/// live in `config.attack.h_dishonest` and `config.network.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub strategy: StrategyKind,
    pub episodes: usize,
    pub config: SimConfig,
}

impl PlanEntry {
    pub fn new(strategy: StrategyKind, episodes: usize, config: SimConfig) -> Self {
        Self {
            id: entry_id(strategy, config.attack.h_dishonest, config.network.seed),
            strategy,
            episodes,
            config,
        }
    }

    pub fn h(&self) -> usize {
        self.config.attack.h_dishonest
    }

    pub fn seed(&self) -> u64 {
        self.config.network.seed
    }
}

pub fn entry_id(strategy: StrategyKind, h: usize, seed: u64) -> String {
    format!("{strategy}_h{h}_s{seed}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub out_dir: PathBuf,
    pub entries: Vec<PlanEntry>,
}

impl ExperimentPlan {
    /// Cartesian product strategy x h x seed over a base config.
    pub fn sweep(
        base: &SimConfig,
        strategies: &[StrategyKind],
        hs: &[usize],
        seeds: &[u64],
        episodes: usize,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        let mut entries = Vec::with_capacity(strategies.len() * hs.len() * seeds.len());
        for &s in strategies {
            for &h in hs {
                for &seed in seeds {
                    let mut cfg = base.clone();
                    cfg.attack.h_dishonest = h;
                    cfg.network.seed = seed;
                    entries.push(PlanEntry::new(s, episodes, cfg));
                }
            }
        }
        Self { out_dir: out_dir.into(), entries }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            e.config.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::config("plan.entries", format!("duplicate run id `{}`", e.id)));
            }
        }
        Ok(())
    }
}

/// Everything one run produces, before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    /// Per-episode training curves (learned strategies only).
    pub training_csv: Option<String>,
    pub policy_json: Option<String>,
}

impl RunOutput {
    pub fn csv(&self, n: usize) -> String {
        rows_to_csv(&self.rows, n)
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics::new(self.rows.clone())
    }
}

/// Executes one plan entry in memory.
pub fn run_entry(entry: &PlanEntry) -> Result<RunOutput> {
    run_entry_observed(entry, |_, _| Ok(()))
}

/// Like [`run_entry`], calling `observe` after every episode.
pub fn run_entry_observed<F>(entry: &PlanEntry, mut observe: F) -> Result<RunOutput>
where
    F: FnMut(&Environment, &EpisodeRecord) -> Result<()>,
{
    let mut env = Environment::new(entry.config.clone())?;
    let mut strategy = entry.strategy.build();
    let mut rows = Vec::with_capacity(entry.episodes);
    let mut training: Option<String> = None;
    for _ in 0..entry.episodes {
        let rec = env.step_episode(strategy.as_mut())?;
        observe(&env, &rec)?;
        if rec.strategy_called {
            if let Some(log) = strategy.training_log() {
                let t = training.get_or_insert_with(|| "episode,epoch,mean_reward,loss\n".to_string());
                for e in &log.epochs {
                    let _ = writeln!(t, "{},{},{},{}", rec.episode, e.epoch, e.mean_reward, e.loss);
                }
            }
        }
        rows.push(MetricsRow::from_record(&rec, entry.strategy.as_str(), entry.h(), entry.seed()));
    }
    Ok(RunOutput { rows, training_csv: training, policy_json: strategy.policy_json() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub entry: PlanEntry,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Artifact file names, relative to the index.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentIndex {
    pub entries: Vec<IndexEntry>,
}

impl ExperimentIndex {
    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(|e| e.status == RunStatus::Ok)
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.status == RunStatus::Failed).count()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let s = fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// A plan that re-runs the listed entries (all if `only` is empty).
    pub fn replan(&self, out_dir: impl Into<PathBuf>, only: &[String]) -> ExperimentPlan {
        ExperimentPlan {
            out_dir: out_dir.into(),
            entries: self
                .entries
                .iter()
                .filter(|e| only.is_empty() || only.contains(&e.entry.id))
                .map(|e| e.entry.clone())
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    id: &'a str,
    strategy: StrategyKind,
    h: usize,
    seed: u64,
    #[serde(flatten)]
    summary: RunSummary,
}

fn write_run(dir: &Path, entry: &PlanEntry, out: &RunOutput) -> Result<Vec<String>> {
    let n = entry.config.network.n_total;
    let mut files = Vec::new();
    let mut put = |name: String, body: &str| -> Result<()> {
        fs::write(dir.join(&name), body)?;
        files.push(name);
        Ok(())
    };
    put(format!("{}.csv", entry.id), &out.csv(n))?;
    let summary = SummaryFile {
        id: &entry.id,
        strategy: entry.strategy,
        h: entry.h(),
        seed: entry.seed(),
        summary: out.metrics().summary(SUMMARY_WINDOW),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    put(format!("{}.summary.json", entry.id), &json)?;
    if let Some(t) = &out.training_csv {
        put(format!("{}.training.csv", entry.id), t)?;
    }
    if let Some(p) = &out.policy_json {
        put(format!("{}.policy.json", entry.id), p)?;
    }
    Ok(files)
}

fn run_one(dir: &Path, entry: &PlanEntry, dump_bvt: bool) -> Result<Vec<String>> {
    let mut dumped = Vec::new();
    let out = run_entry_observed(entry, |env, rec| {
        if let (true, Some(bvt)) = (dump_bvt, env.last_bvt()) {
            let name = format!("{}.ep{}.bvt.json", entry.id, rec.episode);
            fs::write(dir.join(&name), bvt.to_json())?;
            dumped.push(name);
        }
        Ok(())
    })?;
    let mut files = write_run(dir, entry, &out)?;
    files.extend(dumped);
    Ok(files)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    /// Also write each episode's block verification table as JSON.
    pub dump_bvt: bool,
}

/// Runs every entry on a worker pool, writes per-run artifacts and finally
/// `index.json`. A failing run is recorded in the index and does not affect
/// the others.
pub fn run_experiment(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ExperimentIndex> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let dir = plan.out_dir.as_path();
    let entries: Vec<IndexEntry> = pool.install(|| {
        plan.entries
            .par_iter()
            .map(|entry| match run_one(dir, entry, opts.dump_bvt) {
                Ok(artifacts) => IndexEntry { entry: entry.clone(), status: RunStatus::Ok, error: None, artifacts },
                Err(e) => IndexEntry {
                    entry: entry.clone(),
                    status: RunStatus::Failed,
                    error: Some(e.to_string()),
                    artifacts: Vec::new(),
                },
            })
            .collect()
    });
    let index = ExperimentIndex { entries };
    let json = serde_json::to_string_pretty(&index).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join("index.json"), json)?;
    Ok(index)
}

/// Enumerates every allocation of the snapshot's nodes and returns the
/// valid one with the highest total reward. Ties go to the
/// lexicographically smallest allocation.
pub fn brute_force_oracle(snap: &Snapshot, cfg: &SimConfig) -> Result<(ShardAssignment, RewardBreakdown)> {
    let n = snap.num_nodes();
    let d = cfg.network.d_shards;
    let too_large = Error::TooLarge { nodes: n, shards: d };
    let space = u64::try_from(d)
        .ok()
        .and_then(|d| d.checked_pow(u32::try_from(n).ok()?))
        .ok_or(too_large.clone())?;
    if space > ORACLE_CAP {
        return Err(too_large);
    }
    let mut digits = vec![0usize; n];
    let mut best: Option<(ShardAssignment, RewardBreakdown)> = None;
    for _ in 0..space {
        if validate_with(&ShardAssignment(digits.clone()), n, d, cfg.network.n_min).is_ok() {
            let a = ShardAssignment(digits.clone());
            let b = virtual_reward(snap, &a, cfg)?;
            if best.as_ref().is_none_or(|(_, bb)| b.total > bb.total) {
                best = Some((a, b));
            }
        }
        // increment with node 0 as the most significant digit
        for k in (0..n).rev() {
            digits[k] += 1;
            if digits[k] < d {
                break;
            }
            digits[k] = 0;
        }
    }
    best.ok_or_else(|| Error::config("network.n_min", "no allocation satisfies the shard minimum"))
}
