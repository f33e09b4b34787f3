//! Per-message choice of (k, t) and the lane budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::{t_total, PerfParams};
use crate::pipeline::ChopPlan;

/// Threads-per-chunk table entry: messages of at least `min_kib` KiB use `t`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ThreadStep {
    pub min_kib: u64,
    pub t: usize,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SystemProfile {
    pub name: String,
    /// Hyper-threads per node.
    pub total_hyperthreads: usize,
    pub ranks_per_node: usize,
    /// Hyper-threads each rank leaves to communication.
    #[serde(default = "default_comm_reserved")]
    pub comm_reserved: usize,
    pub t_table: Vec<ThreadStep>,
    #[serde(default = "default_chunk_divisor")]
    pub chunk_divisor_kib: u64,
    /// Above this many outstanding sends, pipelining is switched off.
    #[serde(default = "default_outstanding_cap")]
    pub outstanding_cap: usize,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

fn default_comm_reserved() -> usize {
    2
}
fn default_chunk_divisor() -> u64 {
    512
}
fn default_outstanding_cap() -> usize {
    64
}
fn default_max_inflight() -> usize {
    128
}

impl SystemProfile {
    /// 32 hyper-threads, InfiniBand thread table.
    pub fn noleland() -> Self {
        Self {
            name: "noleland".into(),
            total_hyperthreads: 32,
            ranks_per_node: 1,
            comm_reserved: 2,
            t_table: vec![
                ThreadStep { min_kib: 64, t: 2 },
                ThreadStep { min_kib: 128, t: 4 },
                ThreadStep { min_kib: 512, t: 8 },
            ],
            chunk_divisor_kib: 512,
            outstanding_cap: 64,
            max_inflight: 128,
        }
    }

    /// 28 hyper-threads, Omni-Path thread table.
    pub fn bridges() -> Self {
        Self {
            name: "bridges".into(),
            total_hyperthreads: 28,
            t_table: vec![
                ThreadStep { min_kib: 64, t: 4 },
                ThreadStep { min_kib: 256, t: 8 },
                ThreadStep { min_kib: 512, t: 16 },
            ],
            ..Self::noleland()
        }
    }

    pub fn with_ranks(mut self, ranks_per_node: usize) -> Self {
        self.ranks_per_node = ranks_per_node;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks_per_node == 0 || self.total_hyperthreads < self.ranks_per_node {
            return Err(Error::Profile(format!(
                "{}: need total_hyperthreads >= ranks_per_node >= 1",
                self.name
            )));
        }
        if self.t_table.is_empty() {
            return Err(Error::Profile(format!("{}: empty thread table", self.name)));
        }
        if self.t_table.windows(2).any(|w| w[0].min_kib >= w[1].min_kib) {
            return Err(Error::Profile(format!("{}: thread table thresholds must increase", self.name)));
        }
        if self.t_table.iter().any(|s| s.t == 0) || self.chunk_divisor_kib == 0 {
            return Err(Error::Profile(format!("{}: zero t or chunk divisor", self.name)));
        }
        Ok(())
    }

    /// Hyper-threads available to one rank.
    pub fn rank_threads(&self) -> usize {
        self.total_hyperthreads / self.ranks_per_node.max(1)
    }
}

/// `floor(max(1, m / divisor))` for a message of `m_bytes`.
pub fn select_k(m_bytes: u64, profile: &SystemProfile) -> usize {
    let divisor = profile.chunk_divisor_kib * 1024;
    (m_bytes / divisor).max(1) as usize
}

pub fn select_t(m_bytes: u64, profile: &SystemProfile) -> Result<usize> {
    profile
        .t_table
        .iter()
        .rev()
        .find(|step| m_bytes >= step.min_kib * 1024)
        .map(|step| step.t)
        .ok_or_else(|| {
            Error::Policy(format!(
                "{} bytes is below the {} thread table floor",
                m_bytes, profile.name
            ))
        })
}

/// `max(1, min(T0 - T1, t))` with `T0 = floor(T / r)`.
pub fn effective_threads(t: usize, profile: &SystemProfile) -> usize {
    let budget = profile.rank_threads().saturating_sub(profile.comm_reserved);
    budget.min(t).max(1)
}

pub fn plan_message(m_bytes: u64, profile: &SystemProfile, live_outstanding: usize) -> Result<ChopPlan> {
    let t = select_t(m_bytes, profile)?;
    let k = if live_outstanding > profile.outstanding_cap { 1 } else { select_k(m_bytes, profile) };
    ChopPlan::for_message(m_bytes as usize, k, t, effective_threads(t, profile))
}

/// Result of an offline model search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchHit {
    pub k: u64,
    pub t: u32,
    pub predicted_us: f64,
}

/// Grid search over `k` in powers of two and the given `t` values,
/// minimizing the predicted one-way time.
pub fn search_plan(m_bytes: u64, perf: &PerfParams<f64>, t_values: &[u32]) -> Option<SearchHit> {
    let mut best: Option<SearchHit> = None;
    let mut k = 1u64;
    while k <= 1024 {
        for &t in t_values {
            if let Ok(us) = t_total(m_bytes, k, t, perf) {
                if best.map_or(true, |b| us < b.predicted_us) {
                    best = Some(SearchHit { k, t, predicted_us: us });
                }
            }
        }
        k *= 2;
    }
    best
}
