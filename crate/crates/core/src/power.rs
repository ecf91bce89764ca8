//! Discrete transmit power levels, Minimum Reachability Power (MRP)
//! discovery by probe descent, and the per-node MRP cache used by PAMC.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("a power table needs at least two levels, got {0}")]
    TooFewLevels(usize),
    #[error("maximum range must be positive, got {0}")]
    BadRange(f64),
    #[error("destination at {distance} m is beyond the top power level ({max_range} m)")]
    Unreachable { distance: f64, max_range: f64 },
}

/// 1-based ordinal power level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PowerLevel(u32);

impl PowerLevel {
    pub fn new(level: u32) -> Self {
        assert!(level >= 1, "power levels start at 1");
        Self(level)
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for PowerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// How a power level enters the election formula as `P_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrpMetric {
    /// The ordinal level index itself.
    #[default]
    Ordinal,
    /// Proportional to the squared range of the level, normalised so level 1 is 1.
    RangeSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    ranges: Vec<f64>,
}

/// Linear partition of `[0, r_max]`: `R_i = r_max * i / levels`.
pub fn build_power_table(r_max: f64, levels: usize) -> Result<PowerTable, PowerError> {
    if levels < 2 {
        return Err(PowerError::TooFewLevels(levels));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(PowerError::BadRange(r_max));
    }
    let ranges = (1..=levels).map(|i| r_max * (i as f64 / levels as f64)).collect();
    Ok(PowerTable { ranges })
}

impl PowerTable {
    pub fn levels(&self) -> u32 {
        self.ranges.len() as u32
    }

    pub fn max_level(&self) -> PowerLevel {
        PowerLevel(self.levels())
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn range(&self, level: PowerLevel) -> f64 {
        self.ranges[level.0 as usize - 1]
    }

    pub fn max_range(&self) -> f64 {
        *self.ranges.last().expect("table has at least two levels")
    }

    /// Smallest level whose range reaches `d`.
    pub fn min_level_for_distance(&self, d: f64) -> Result<PowerLevel, PowerError> {
        self.ranges
            .iter()
            .position(|&r| r >= d)
            .map(|i| PowerLevel(i as u32 + 1))
            .ok_or(PowerError::Unreachable { distance: d, max_range: self.max_range() })
    }

    /// Level used to advertise over `range`: the smallest covering level,
    /// or the top level when nothing covers it.
    pub fn level_covering(&self, range: f64) -> PowerLevel {
        self.min_level_for_distance(range).unwrap_or(self.max_level())
    }

    pub fn metric_value(&self, level: PowerLevel, metric: MrpMetric) -> f64 {
        match metric {
            MrpMetric::Ordinal => f64::from(level.0),
            MrpMetric::RangeSquared => {
                let ratio = self.range(level) / self.ranges[0];
                ratio * ratio
            }
        }
    }
}

/// Bounded least-recently-used map from destination id to MRP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MrpCache {
    capacity: usize,
    // Front is most recently used.
    entries: VecDeque<(NodeId, PowerLevel)>,
}

impl MrpCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up `dst` and marks it most recently used.
    pub fn lookup(&mut self, dst: NodeId) -> Option<PowerLevel> {
        let idx = self.entries.iter().position(|(id, _)| *id == dst)?;
        let entry = self.entries.remove(idx)?;
        self.entries.push_front(entry);
        Some(entry.1)
    }

    pub fn peek(&self, dst: NodeId) -> Option<PowerLevel> {
        self.entries.iter().find(|(id, _)| *id == dst).map(|(_, l)| *l)
    }

    pub fn insert(&mut self, dst: NodeId, level: PowerLevel) {
        if self.capacity == 0 {
            return;
        }
        if let Some(idx) = self.entries.iter().position(|(id, _)| *id == dst) {
            self.entries.remove(idx);
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front((dst, level));
    }

    /// Entries from most to least recently used.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, PowerLevel)> + '_ {
        self.entries.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeStep {
    pub level: PowerLevel,
    pub range: f64,
    pub acked: bool,
}

/// Outcome of finding the MRP towards one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    pub level: PowerLevel,
    /// Probes in the order they were sent; empty on a cache hit.
    pub steps: Vec<ProbeStep>,
}

impl Discovery {
    pub fn probes(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn acks(&self) -> u32 {
        self.steps.iter().filter(|s| s.acked).count() as u32
    }

    pub fn from_cache(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Probes from the top level downwards until a probe goes unanswered or
/// level 1 is acknowledged. The MRP is the lowest acknowledged level.
pub fn probe_descent(table: &PowerTable, d: f64) -> Result<Discovery, PowerError> {
    if d > table.max_range() {
        return Err(PowerError::Unreachable { distance: d, max_range: table.max_range() });
    }
    let mut steps = Vec::new();
    let mut lowest = table.max_level();
    for level in (1..=table.levels()).rev().map(PowerLevel) {
        let range = table.range(level);
        let acked = range >= d;
        steps.push(ProbeStep { level, range, acked });
        if !acked {
            break;
        }
        lowest = level;
    }
    Ok(Discovery { level: lowest, steps })
}

/// Cache-mediated MRP discovery towards node `dst` at distance `d`.
pub fn discover_mrp(
    table: &PowerTable,
    cache: &mut MrpCache,
    dst: NodeId,
    d: f64,
) -> Result<Discovery, PowerError> {
    if let Some(level) = cache.lookup(dst) {
        return Ok(Discovery { level, steps: Vec::new() });
    }
    let found = probe_descent(table, d)?;
    cache.insert(dst, found.level);
    Ok(found)
}

/// Total reciprocal minimum reachability power, `sum 1/P_i`.
pub fn trmrp<I>(levels: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    levels.into_iter().map(|p| 1.0 / p).sum()
}
