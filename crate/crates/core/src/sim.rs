//! Cycle-approximate cost model of the five-stage classification pipeline:
//! distance -> storage -> selection -> vote -> output.
//!
//! Stages run back to back; no overlap is modelled. Per window:
//!
//! ```text
//! distance  = m * n * mac
//! storage   = 0            (one store read per MAC, folded into distance)
//! selection = m * (compare + k * insert)
//! vote      = k * vote
//! output    = 0
//! ```
//!
//! plus `fixed_overhead_cycles` for each of the five stages.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::knn::{Label, Neighbor, NeighborSet, SquaredDistance};
use crate::store::{bytes_per_entry, footprint_for, USER_DATA_BUDGET_BYTES};

pub const STAGES: usize = 5;
/// Companion MCU clock, 80 MHz.
pub const DEFAULT_CLOCK_HZ: f64 = 80_000_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCostModel {
    pub cycles_per_mac: u64,
    pub cycles_per_compare: u64,
    pub cycles_per_insert_step: u64,
    pub cycles_per_vote_step: u64,
    pub fixed_overhead_cycles: u64,
}

impl Default for StageCostModel {
    fn default() -> Self {
        Self {
            cycles_per_mac: 1,
            cycles_per_compare: 1,
            cycles_per_insert_step: 1,
            cycles_per_vote_step: 1,
            fixed_overhead_cycles: 10,
        }
    }
}

impl StageCostModel {
    pub fn unit_costs_no_overhead() -> Self {
        Self {
            fixed_overhead_cycles: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let unit = [
            ("mac", self.cycles_per_mac),
            ("compare", self.cycles_per_compare),
            ("insert", self.cycles_per_insert_step),
            ("vote", self.cycles_per_vote_step),
        ];
        for (name, v) in unit {
            if v < 1 {
                return Err(SimError::InvalidParams(format!("{name} cost must be at least 1")));
            }
        }
        Ok(())
    }

    /// Cycles for one distance comparison. The operands are accepted only to
    /// make the constant-time contract visible: they never affect the cost.
    pub fn compare_cycles(&self, _a: SquaredDistance, _b: SquaredDistance) -> u64 {
        self.cycles_per_compare
    }

    /// Applies `key=value` overrides separated by commas, e.g.
    /// `mac=2,compare=1,overhead=0`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, SimError> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| SimError::InvalidParams(format!("expected key=value, got {part:?}")))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| SimError::InvalidParams(format!("bad cost value in {part:?}")))?;
            let slot = match key.trim() {
                "mac" => &mut self.cycles_per_mac,
                "compare" => &mut self.cycles_per_compare,
                "insert" => &mut self.cycles_per_insert_step,
                "vote" => &mut self.cycles_per_vote_step,
                "overhead" => &mut self.fixed_overhead_cycles,
                other => return Err(SimError::InvalidParams(format!("unknown cost key {other:?}"))),
            };
            *slot = value;
        }
        self.validate()?;
        Ok(self)
    }
}

impl FromStr for StageCostModel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageCostModel::default().with_overrides(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Stored exemplars scanned per window.
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub clock_hz: f64,
    pub sample_rate_hz: f64,
}

impl SimParams {
    pub fn window_period_s(&self) -> f64 {
        self.n as f64 / self.sample_rate_hz
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        if self.m == 0 || self.n == 0 {
            return bad(format!("m and n must be at least 1 (m={}, n={})", self.m, self.n));
        }
        if self.k == 0 || self.k > self.m {
            return bad(format!("k must lie in 1..=m (k={}, m={})", self.k, self.m));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return bad(format!("clock must be positive, got {}", self.clock_hz));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCycles {
    pub distance: u64,
    pub storage: u64,
    pub selection: u64,
    pub vote: u64,
    pub output: u64,
}

impl StageCycles {
    pub fn total(&self) -> u64 {
        self.distance + self.storage + self.selection + self.vote + self.output
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub stages: StageCycles,
    pub cycles_per_window: u64,
    pub latency_us: f64,
    pub max_windows_per_second: f64,
    pub store_bytes: usize,
    pub fits_budget: bool,
    pub window_period_s: f64,
    pub realtime_ok: bool,
}

pub fn stage_cycles(m: usize, n: usize, k: usize, model: &StageCostModel) -> StageCycles {
    let (m, n, k) = (m as u64, n as u64, k as u64);
    let oh = model.fixed_overhead_cycles;
    StageCycles {
        distance: m * n * model.cycles_per_mac + oh,
        storage: oh,
        selection: m * (model.cycles_per_compare + k * model.cycles_per_insert_step) + oh,
        vote: k * model.cycles_per_vote_step + oh,
        output: oh,
    }
}

pub fn simulate_classification(params: &SimParams, model: &StageCostModel) -> Result<SimReport, SimError> {
    params.validate()?;
    model.validate()?;
    let stages = stage_cycles(params.m, params.n, params.k, model);
    let cycles = stages.total();
    let latency_us = cycles as f64 / params.clock_hz * 1e6;
    let store_bytes = footprint_for(params.m, params.n).total_bytes;
    let period = params.window_period_s();
    Ok(SimReport {
        m: params.m,
        n: params.n,
        k: params.k,
        stages,
        cycles_per_window: cycles,
        latency_us,
        max_windows_per_second: params.clock_hz / cycles as f64,
        store_bytes,
        fits_budget: store_bytes <= USER_DATA_BUDGET_BYTES,
        window_period_s: period,
        realtime_ok: latency_us <= period * 1e6,
    })
}

/// Per-candidate selection cost while scanning `distances` with a k-deep
/// insertion buffer: one comparison against the current k-th best, then `k`
/// insertion steps. Every entry is identical regardless of the distances.
pub fn selection_trace(model: &StageCostModel, k: usize, distances: &[SquaredDistance]) -> Vec<u64> {
    let mut buffer = NeighborSet::with_capacity(k);
    distances
        .iter()
        .enumerate()
        .map(|(store_index, &distance)| {
            let kth = match buffer.entries() {
                e if e.len() == k => e[k - 1].distance,
                _ => SquaredDistance(u64::MAX),
            };
            let c = model.compare_cycles(distance, kth);
            buffer.offer(Neighbor {
                distance,
                label: Label::NonSeizure,
                store_index,
            });
            c + k as u64 * model.cycles_per_insert_step
        })
        .collect()
}

/// One report per `(m, k)` pair, `m`-major.
pub fn sweep_design_space(
    m_values: &[usize],
    k_values: &[usize],
    n: usize,
    model: &StageCostModel,
    clock_hz: f64,
    sample_rate_hz: f64,
    exec: Execution,
) -> Result<Vec<SimReport>, SimError> {
    if m_values.is_empty() || k_values.is_empty() {
        return Err(SimError::InvalidParams("m and k lists must be non-empty".into()));
    }
    let points: Vec<SimParams> = m_values
        .iter()
        .flat_map(|&m| {
            k_values.iter().map(move |&k| SimParams {
                m,
                n,
                k,
                clock_hz,
                sample_rate_hz,
            })
        })
        .collect();
    exec.try_map(&points, |p| simulate_classification(p, model))
}

/// Smallest exemplar count whose footprint exceeds the user-data budget.
pub fn first_m_over_budget(n: usize) -> usize {
    USER_DATA_BUDGET_BYTES / bytes_per_entry(n) + 1
}

#[derive(Serialize)]
struct CsvRow {
    m: usize,
    k: usize,
    n: usize,
    cycles: u64,
    latency_us: f64,
    windows_per_s: f64,
    store_bytes: usize,
    fits_budget: bool,
    realtime_ok: bool,
}

pub fn write_csv<W: Write>(reports: &[SimReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow {
            m: r.m,
            k: r.k,
            n: r.n,
            cycles: r.cycles_per_window,
            latency_us: r.latency_us,
            windows_per_s: r.max_windows_per_second,
            store_bytes: r.store_bytes,
            fits_budget: r.fits_budget,
            realtime_ok: r.realtime_ok,
        })?;
    }
    w.flush()?;
    Ok(())
}
