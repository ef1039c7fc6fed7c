//! Node-to-node transaction counts and the intra/cross-shard split.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assignment::{NodeProfile, ValidatedAssignment};
use crate::config::TxConfig;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

/// Symmetric `N x N` matrix of transaction counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionMatrix {
    n: usize,
    phi: Vec<u64>,
}

impl TransactionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, phi: vec![0; n * n] }
    }

    /// Builds from the upper triangle of `rows`; errors if `rows` is not
    /// square, not symmetric, or has a non-zero diagonal.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            if row[i] != 0 {
                return Err(Error::Parse(format!("diagonal entry ({i}, {i}) is {}", row[i])));
            }
            for (j, &v) in row.iter().enumerate() {
                if rows[j][i] != v {
                    return Err(Error::Parse(format!("entry ({i}, {j}) is not symmetric")));
                }
                m.phi[i * n + j] = v;
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.phi[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`. Panics on the diagonal.
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        assert_ne!(i, j, "diagonal must stay zero");
        self.phi[i * self.n + j] = v;
        self.phi[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.phi[i * self.n..(i + 1) * self.n]
    }

    /// Sum over unordered pairs.
    pub fn total(&self) -> u64 {
        self.phi.iter().sum::<u64>() / 2
    }

    /// Weighted adjacency as reals (used by graph partitioning).
    pub fn as_f64(&self) -> Vec<f64> {
        self.phi.iter().map(|&v| v as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<u64>().map_err(|e| Error::Parse(format!("{c:?}: {e}"))))
                    .collect::<Result<Vec<u64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }
}

/// Draws a matrix: every pair gets `round(max(0, normal(base_mean, base_sd)))`,
/// and dishonest-dishonest pairs get an extra `|normal(boost, boost / 4)|`
/// before rounding. Rounding is half away from zero.
pub fn generate(profiles: &[NodeProfile], tx: &TxConfig, rng: &mut DeterministicRng) -> TransactionMatrix {
    let n = profiles.len();
    let base = Normal::new(tx.base_mean, tx.base_sd).expect("validated tx config");
    let noise = (tx.collusion_boost > 0.0)
        .then(|| Normal::new(tx.collusion_boost, tx.collusion_boost / 4.0).expect("validated tx config"));
    let mut m = TransactionMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = base.sample(rng).max(0.0);
            if let Some(noise) = &noise {
                if profiles[i].is_dishonest() && profiles[j].is_dishonest() {
                    v += noise.sample(rng).abs();
                }
            }
            m.set(i, j, v.round() as u64);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxStats {
    /// Intra-shard transaction count.
    pub phi_in: u64,
    /// Cross-shard transaction count.
    pub phi_cr: u64,
    /// `phi_cr / (phi_cr + phi_in)`, or 0 when there are no transactions.
    pub ratio: f64,
}

/// Cross-shard count as total minus the per-shard within-block sums (both
/// over ordered pairs, hence the halving).
pub fn cst_stats(phi: &TransactionMatrix, a: &ValidatedAssignment) -> Result<TxStats> {
    if phi.n() != a.num_nodes() {
        return Err(Error::DimensionMismatch { expected: a.num_nodes(), got: phi.n() });
    }
    let total: u64 = phi.phi.iter().sum();
    let intra: u64 = a
        .all_members()
        .iter()
        .map(|m| m.iter().map(|&i| m.iter().map(|&k| phi.get(i, k)).sum::<u64>()).sum::<u64>())
        .sum();
    let phi_in = intra / 2;
    let phi_cr = (total - intra) / 2;
    let denom = phi_in + phi_cr;
    let ratio = if denom == 0 { 0.0 } else { phi_cr as f64 / denom as f64 };
    Ok(TxStats { phi_in, phi_cr, ratio })
}
