//! Per-episode metric rows and run aggregates.
//!
//! Throughput here is model-derived: there is no wall-clock measurement.
//! Intra-shard transactions of a healthy shard count once, cross-shard
//! transactions between healthy shards count `1 / cst_cost`, and anything
//! touching a corrupted shard counts zero.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::ValidatedAssignment;
use crate::config::ThroughputConfig;
use crate::env::EpisodeRecord;
use crate::error::{Error, Result};
use crate::risk::RiskReport;
use crate::txmatrix::TransactionMatrix;

pub fn episode_throughput(
    tx: &TransactionMatrix,
    a: &ValidatedAssignment,
    report: &RiskReport,
    model: &ThroughputConfig,
) -> f64 {
    let n = tx.n();
    let alive = |i: usize| !report.corrupted[a.shard_of(i)];
    let (mut ist, mut cst) = (0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            if !(alive(i) && alive(j)) {
                continue;
            }
            if a.same_shard(i, j) {
                ist += tx.get(i, j);
            } else {
                cst += tx.get(i, j);
            }
        }
    }
    ist as f64 + cst as f64 / model.cst_cost
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub strategy: String,
    pub h: usize,
    pub seed: u64,
    pub xi: f64,
    pub varrho: f64,
    pub eta: f64,
    pub reward_total: f64,
    pub cst_ratio: f64,
    pub psi: f64,
    pub omega_in: f64,
    pub omega_cr: f64,
    pub corrupted_count: usize,
    pub shards: usize,
    pub throughput: f64,
    pub trigger_reason: String,
    /// Whether the allocation the episode ran under had a corrupted shard.
    pub corrupted_before: usize,
    pub flags: String,
    pub gtt: Vec<f64>,
}

pub const CSV_FIXED_COLUMNS: [&str; 18] = [
    "episode",
    "strategy",
    "h",
    "seed",
    "xi",
    "varrho",
    "eta",
    "reward_total",
    "cst_ratio",
    "psi",
    "omega_in",
    "omega_cr",
    "corrupted_count",
    "throughput",
    "trigger_reason",
    "corrupted_before",
    "flags",
    "shards",
];

impl MetricsRow {
    pub fn from_record(rec: &EpisodeRecord, strategy: &str, h: usize, seed: u64) -> Self {
        let b = &rec.applied.breakdown;
        let mut flags = Vec::new();
        if rec.strategy_called {
            flags.push("resharded");
        }
        if rec.repaired {
            flags.push("repaired");
        }
        if rec.fallback {
            flags.push("fallback");
        }
        Self {
            episode: rec.episode,
            strategy: strategy.to_owned(),
            h,
            seed,
            xi: b.xi,
            varrho: b.varrho,
            eta: b.eta,
            reward_total: b.total,
            cst_ratio: rec.applied.stats.ratio,
            psi: b.psi,
            omega_in: b.omega_in,
            omega_cr: b.omega_cr,
            corrupted_count: rec.applied.report.corrupted_count(),
            shards: rec.applied.report.corrupted.len(),
            throughput: rec.throughput,
            trigger_reason: rec.report.reason.label(),
            corrupted_before: rec.report.corrupted_count(),
            flags: if flags.is_empty() { "-".into() } else { flags.join("|") },
            gtt: rec.gtt.clone(),
        }
    }

    pub fn csv_header(n: usize) -> String {
        let mut cols: Vec<String> = CSV_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        cols.extend((0..n).map(|i| format!("gtt_{i}")));
        cols.join(",")
    }

    /// Floats use Rust's shortest round-trip formatting, so equal values
    /// always print identically.
    pub fn csv_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.strategy,
            self.h,
            self.seed,
            self.xi,
            self.varrho,
            self.eta,
            self.reward_total,
            self.cst_ratio,
            self.psi,
            self.omega_in,
            self.omega_cr,
            self.corrupted_count,
            self.throughput,
            self.trigger_reason,
            self.corrupted_before,
            self.flags,
            self.shards,
        );
        for g in &self.gtt {
            let _ = write!(s, ",{g}");
        }
        s
    }
}

pub fn rows_to_csv(rows: &[MetricsRow], n: usize) -> String {
    let mut out = MetricsRow::csv_header(n);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// Aggregates written to the per-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_cst_ratio: f64,
    pub mean_psi: f64,
    pub mean_omega_in: f64,
    pub mean_omega_cr: f64,
    pub mean_throughput: f64,
    pub corrupted_shard_ratio: f64,
    pub corrupted_window: usize,
    pub throughput_model: String,
}

impl RunMetrics {
    pub fn new(rows: Vec<MetricsRow>) -> Self {
        Self { rows }
    }

    pub fn mean_reward(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.reward_total))
    }

    pub fn mean_throughput(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.throughput))
    }

    /// Rows of the last `k` episodes (all rows if fewer).
    pub fn tail(&self, k: usize) -> &[MetricsRow] {
        &self.rows[self.rows.len().saturating_sub(k)..]
    }

    pub fn summary(&self, window: usize) -> RunSummary {
        let k = window.min(self.rows.len());
        RunSummary {
            episodes: self.rows.len(),
            mean_reward: self.mean_reward(),
            mean_cst_ratio: mean(self.rows.iter().map(|r| r.cst_ratio)),
            mean_psi: mean(self.rows.iter().map(|r| r.psi)),
            mean_omega_in: mean(self.rows.iter().map(|r| r.omega_in)),
            mean_omega_cr: mean(self.rows.iter().map(|r| r.omega_cr)),
            mean_throughput: self.mean_throughput(),
            corrupted_shard_ratio: corrupted_shard_ratio(&self.rows, k).unwrap_or(0.0),
            corrupted_window: k,
            throughput_model: "model-derived".into(),
        }
    }
}

/// Mean throughput with dishonest nodes over mean throughput without.
pub fn normalized_throughput(run_h: &RunMetrics, run_0: &RunMetrics) -> Result<f64> {
    let base = run_0.mean_throughput();
    if base == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok(run_h.mean_throughput() / base)
}

/// Fraction of (episode, shard) cells corrupted over the last `k` rows.
pub fn corrupted_shard_ratio(rows: &[MetricsRow], k: usize) -> Result<f64> {
    if rows.len() < k || k == 0 {
        return Err(Error::InsufficientRows { needed: k.max(1), have: rows.len() });
    }
    let tail = &rows[rows.len() - k..];
    let cells: usize = tail.iter().map(|r| r.shards).sum();
    let bad: usize = tail.iter().map(|r| r.corrupted_count).sum();
    Ok(if cells == 0 { 0.0 } else { bad as f64 / cells as f64 })
}
