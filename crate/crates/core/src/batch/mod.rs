//! Batch layer: the master dataset plus periodically rebuilt aggregate
//! tables at several time/frequency levels.

mod master;
mod tables;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use master::{CompactReport, MasterDataset, BATCH_CONSUMER};
pub use tables::{LevelTable, TableSet, TableStore};

use crate::aggregate::{
    fold_segment, AggFn, AggregateCell, CellKey, CellMap, Layer, Level, Range, DEFAULT_LEVELS,
};
use crate::clock::Millis;
use crate::ingest::{LogConfig, Queue};
use crate::sensor::PsdSegment;
use crate::{Error, Result, SensorId};

/// Levels every deployment must precompute: the public resolution cap and
/// the TV-occupancy grid.
pub const REQUIRED_LEVELS: [Level; 2] =
    [Level::new(60_000, 100_000), Level::new(60_000, 1_000_000)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub levels: Vec<Level>,
    pub log: LogConfig,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS.to_vec(),
            log: LogConfig::default(),
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        for l in &self.levels {
            l.validate()?;
        }
        for r in REQUIRED_LEVELS {
            if !self.levels.contains(&r) {
                return Err(Error::invalid(format!("batch levels must include {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchQuery {
    pub sensor: SensorId,
    pub range: Range,
    pub level: Level,
    pub func: AggFn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub version: u64,
    pub segments: u64,
    pub cells: u64,
}

/// Cells of `q.level` intersecting the query, ordered by `(t, f)`.
pub fn query_batch(set: &TableSet, q: &BatchQuery) -> Result<Vec<AggregateCell>> {
    q.range.validate()?;
    let table = set
        .levels
        .get(&q.level)
        .ok_or_else(|| Error::NoSuchView(format!("no batch table at {}", q.level)))?;
    Ok(select(&table.cells, &q.sensor, &q.range, q.level)
        .map(|(k, a)| AggregateCell::from_acc(k, a, q.level, q.func, Layer::Batch))
        .collect())
}

/// Entries of `cells` for `sensor` intersecting `range`, in key order.
pub fn select<'a>(
    cells: &'a CellMap,
    sensor: &SensorId,
    range: &Range,
    level: Level,
) -> impl Iterator<Item = (&'a CellKey, &'a crate::aggregate::Acc)> + 'a {
    let (t_lo, t_hi) = range.t_span(level);
    let (f_lo, f_hi) = range.f_span(level);
    let empty = range.is_empty() || t_hi <= t_lo;
    let lo = CellKey {
        sensor: sensor.clone(),
        t: t_lo,
        f: i64::MIN,
    };
    let hi = CellKey {
        sensor: sensor.clone(),
        t: if empty { t_lo } else { t_hi },
        f: i64::MIN,
    };
    cells
        .range(lo..hi)
        .filter(move |(k, _)| (f_lo..f_hi).contains(&k.f))
}

pub struct BatchLayer {
    master: Mutex<MasterDataset>,
    tables: TableStore,
    levels: Vec<Level>,
    build_lock: Mutex<()>,
}

impl BatchLayer {
    /// Opens `dir/master`, `dir/tables` and the batch consumer offsets.
    pub fn open(dir: impl AsRef<Path>, cfg: BatchConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = dir.as_ref();
        Ok(Self {
            master: Mutex::new(MasterDataset::open(dir, cfg.log)?),
            tables: TableStore::open(dir.join("tables"))?,
            levels: cfg.levels,
            build_lock: Mutex::new(()),
        })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn snapshot(&self) -> Arc<TableSet> {
        self.tables.snapshot()
    }

    pub fn tables(&self) -> &TableStore {
        &self.tables
    }

    pub fn with_master<T>(&self, f: impl FnOnce(&mut MasterDataset) -> T) -> T {
        f(&mut self.master.lock().expect("master lock"))
    }

    pub fn compact(&self, queue: &Queue) -> Result<CompactReport> {
        self.with_master(|m| m.compact(queue))
    }

    /// Recomputes every level's buckets lying fully inside `[from, to)` from
    /// the master dataset and publishes a new table version. Buckets outside
    /// the range are carried over from the current version.
    pub fn build(&self, from: Millis, to: Millis) -> Result<BuildReport> {
        let _guard = self.build_lock.lock().expect("build lock");
        let spans: Vec<(Level, Millis, Millis)> = self
            .levels
            .iter()
            .map(|&l| {
                (
                    l,
                    l.t_index(from + l.t_ms - 1) * l.t_ms,
                    l.t_index(to) * l.t_ms,
                )
            })
            .collect();
        let lo = spans.iter().map(|s| s.1).min().unwrap_or(from);
        let hi = spans.iter().map(|s| s.2).max().unwrap_or(to);
        let mut fresh: BTreeMap<Level, CellMap> =
            self.levels.iter().map(|&l| (l, CellMap::new())).collect();
        let mut segments = 0u64;
        if hi > lo {
            self.with_master(|m| {
                m.segments_in(lo, hi, |seg| {
                    segments += 1;
                    for &(l, s_lo, s_hi) in &spans {
                        if (s_lo..s_hi).contains(&seg.t0) {
                            fold_segment(fresh.get_mut(&l).expect("level"), &seg, l);
                        }
                    }
                })
            })?;
        }
        let current = self.tables.snapshot();
        let mut levels = BTreeMap::new();
        for (l, s_lo, s_hi) in spans {
            let old = current.levels.get(&l).cloned().unwrap_or_default();
            let new = fresh.remove(&l).expect("level");
            if s_hi <= s_lo {
                levels.insert(l, old);
                continue;
            }
            let (b_lo, b_hi) = (s_lo / l.t_ms, s_hi / l.t_ms);
            let mut cells: CellMap = old
                .cells
                .into_iter()
                .filter(|(k, _)| !(b_lo..b_hi).contains(&k.t))
                .collect();
            cells.extend(new);
            levels.insert(
                l,
                LevelTable {
                    cells,
                    horizon_ms: old.horizon_ms.max(s_hi),
                },
            );
        }
        let cells = levels.values().map(|t| t.cells.len() as u64).sum();
        let set = self.tables.publish(levels)?;
        Ok(BuildReport {
            version: set.version,
            segments,
            cells,
        })
    }

    pub fn query(&self, q: &BatchQuery) -> Result<Vec<AggregateCell>> {
        query_batch(&self.snapshot(), q)
    }

    /// Master segments of `sensor` with `t0` in the time range whose tuned
    /// window overlaps the frequency range.
    pub fn raw_segments(&self, sensor: &SensorId, range: &Range) -> Result<Vec<PsdSegment>> {
        range.validate()?;
        let mut out = Vec::new();
        if range.is_empty() {
            return Ok(out);
        }
        self.with_master(|m| {
            m.segments_in(range.t0_ms, range.t1_ms, |seg| {
                if &seg.sensor_id == sensor
                    && seg.window_lo() < range.f1_hz
                    && seg.window_hi() > range.f0_hz
                {
                    out.push(seg);
                }
            })
        })?;
        Ok(out)
    }
}
