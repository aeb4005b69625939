//! Time/frequency aggregation shared by the batch and speed layers.
//!
//! A [`Level`] is a `(time width, frequency width)` grid anchored at the
//! epoch and at 0 Hz. Bins are assigned by center frequency to half-open
//! buckets `[start, start + width)`; segments by `t0`. Cells accumulate
//! `(sum, count, max)` of linear bin powers, which makes them mergeable:
//! a coarse cell is exactly the merge of its children.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::sensor::PsdSegment;
use crate::{Error, Result, SensorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Level {
    pub t_ms: Millis,
    pub f_hz: u64,
}

impl Level {
    pub const fn new(t_ms: Millis, f_hz: u64) -> Self {
        Self { t_ms, f_hz }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_ms <= 0 || self.f_hz == 0 {
            return Err(Error::invalid(format!(
                "level {self} needs positive widths"
            )));
        }
        Ok(())
    }

    /// Whether every bucket of `coarser` is a union of buckets of `self`.
    pub fn refines(&self, coarser: &Level) -> bool {
        coarser.t_ms % self.t_ms == 0 && coarser.f_hz.is_multiple_of(self.f_hz)
    }

    pub fn t_index(&self, t: Millis) -> i64 {
        t.div_euclid(self.t_ms)
    }

    pub fn f_index(&self, f: f64) -> i64 {
        (f / self.f_hz as f64).floor() as i64
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}ms/{}Hz", self.t_ms, self.f_hz)
    }
}

/// Finest speed level, the public-cap level, the TV-occupancy level and an
/// hourly overview.
pub const DEFAULT_LEVELS: [Level; 4] = [
    Level::new(5_000, 100_000),
    Level::new(60_000, 100_000),
    Level::new(60_000, 1_000_000),
    Level::new(3_600_000, 1_000_000),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Avg,
    Max,
}

impl std::str::FromStr for AggFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(AggFn::Avg),
            "max" => Ok(AggFn::Max),
            other => Err(Error::invalid(format!(
                "unknown aggregation function {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Batch,
    Speed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acc {
    pub sum: f64,
    pub count: u64,
    pub max: f64,
}

impl Acc {
    pub fn one(v: f64) -> Self {
        Self {
            sum: v,
            count: 1,
            max: v,
        }
    }

    pub fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
        self.max = self.max.max(v);
    }

    pub fn merge(&mut self, other: &Acc) {
        self.sum += other.sum;
        self.count += other.count;
        self.max = self.max.max(other.max);
    }

    pub fn avg(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn value(&self, f: AggFn) -> f64 {
        match f {
            AggFn::Avg => self.avg(),
            AggFn::Max => self.max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub sensor: SensorId,
    pub t: i64,
    pub f: i64,
}

pub type CellMap = BTreeMap<CellKey, Acc>;

/// Adds every bin of `seg` to its cell at `level`.
pub fn fold_segment(cells: &mut CellMap, seg: &PsdSegment, level: Level) {
    let t = level.t_index(seg.t0);
    for k in 0..seg.bins.len() {
        let key = CellKey {
            sensor: seg.sensor_id.clone(),
            t,
            f: level.f_index(seg.bin_freq(k)),
        };
        let p = seg.bin_power_mw(k);
        cells
            .entry(key)
            .and_modify(|a| a.add(p))
            .or_insert_with(|| Acc::one(p));
    }
}

/// Merges cells of `from` into the coarser level `to`.
pub fn coarsen<'a>(
    cells: impl IntoIterator<Item = (&'a CellKey, &'a Acc)>,
    from: Level,
    to: Level,
) -> Result<CellMap> {
    if !from.refines(&to) {
        return Err(Error::NoSuchView(format!(
            "{to} is not a coarsening of {from}"
        )));
    }
    let (rt, rf) = (to.t_ms / from.t_ms, (to.f_hz / from.f_hz) as i64);
    let mut out = CellMap::new();
    for (k, a) in cells {
        let key = CellKey {
            sensor: k.sensor.clone(),
            t: k.t.div_euclid(rt),
            f: k.f.div_euclid(rf),
        };
        out.entry(key).and_modify(|x| x.merge(a)).or_insert(*a);
    }
    Ok(out)
}

/// A cell as returned by queries, in linear mW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub sensor_id: SensorId,
    pub t_start_ms: Millis,
    pub t_width_ms: Millis,
    pub f_start_hz: f64,
    pub f_width_hz: f64,
    #[serde(rename = "fn")]
    pub func: AggFn,
    pub value_mw: f64,
    pub count: u64,
    pub layer: Layer,
}

impl AggregateCell {
    pub fn from_acc(key: &CellKey, acc: &Acc, level: Level, func: AggFn, layer: Layer) -> Self {
        Self {
            sensor_id: key.sensor.clone(),
            t_start_ms: key.t * level.t_ms,
            t_width_ms: level.t_ms,
            f_start_hz: key.f as f64 * level.f_hz as f64,
            f_width_hz: level.f_hz as f64,
            func,
            value_mw: acc.value(func),
            count: acc.count,
            layer,
        }
    }
}

/// Half-open time and frequency ranges of a query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub t0_ms: Millis,
    pub t1_ms: Millis,
    pub f0_hz: f64,
    pub f1_hz: f64,
}

impl Range {
    pub fn validate(&self) -> Result<()> {
        if self.t1_ms < self.t0_ms || !(self.f1_hz >= self.f0_hz) {
            return Err(Error::invalid("ranges must satisfy t0 <= t1 and f0 <= f1"));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.t1_ms <= self.t0_ms || self.f1_hz <= self.f0_hz
    }

    /// Bucket index span `[lo, hi)` of cells at `level` intersecting the
    /// time range.
    pub fn t_span(&self, level: Level) -> (i64, i64) {
        (
            level.t_index(self.t0_ms),
            (self.t1_ms + level.t_ms - 1).div_euclid(level.t_ms),
        )
    }

    pub fn f_span(&self, level: Level) -> (i64, i64) {
        let w = level.f_hz as f64;
        (level.f_index(self.f0_hz), (self.f1_hz / w).ceil() as i64)
    }

    pub fn intersects(&self, key: &CellKey, level: Level) -> bool {
        let (t_lo, t_hi) = self.t_span(level);
        let (f_lo, f_hi) = self.f_span(level);
        !self.is_empty() && (t_lo..t_hi).contains(&key.t) && (f_lo..f_hi).contains(&key.f)
    }
}
