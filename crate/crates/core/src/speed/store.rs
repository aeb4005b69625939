use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::window::ClosedWindow;
use crate::aggregate::{coarsen, Acc, AggFn, AggregateCell, CellKey, CellMap, Layer, Level, Range};
use crate::batch::select;
use crate::clock::{Millis, SharedClock};
use crate::{Error, Result, SensorId};

pub const DEFAULT_SPEED_RETENTION_MS: Millis = 3_600_000;

/// Recent closed windows, in memory, expired by window end.
pub struct SpeedStore {
    level: Level,
    retention_ms: Millis,
    clock: SharedClock,
    windows: RwLock<BTreeMap<Millis, Arc<CellMap>>>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    level: Level,
    windows: Vec<(Millis, Vec<(CellKey, Acc)>)>,
}

impl SpeedStore {
    pub fn new(level: Level, retention_ms: Millis, clock: SharedClock) -> Self {
        Self {
            level,
            retention_ms,
            clock,
            windows: RwLock::default(),
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    fn cutoff(&self) -> Millis {
        self.clock.now_ms() - self.retention_ms
    }

    pub fn insert(&self, w: &ClosedWindow) {
        let cutoff = self.cutoff();
        let mut windows = self.windows.write().expect("speed store lock");
        windows.insert(w.start_ms, Arc::new(w.cells.clone()));
        let keep = windows.split_off(&(cutoff - self.level.t_ms + 1));
        *windows = keep;
    }

    /// Live windows overlapping `[t0, t1)`.
    fn live(&self, t0: Millis, t1: Millis) -> Vec<(Millis, Arc<CellMap>)> {
        let cutoff = self.cutoff();
        let windows = self.windows.read().expect("speed store lock");
        windows
            .range(t0 - self.level.t_ms + 1..t1.max(t0 - self.level.t_ms + 1))
            .filter(|(s, _)| **s + self.level.t_ms > cutoff)
            .map(|(s, c)| (*s, c.clone()))
            .collect()
    }

    /// Speed cells of `sensor` at `level`, which must be the store level or
    /// a coarsening of it.
    pub fn cells(&self, sensor: &SensorId, range: &Range, level: Level) -> Result<CellMap> {
        range.validate()?;
        if !self.level.refines(&level) {
            return Err(Error::NoSuchView(format!(
                "speed layer serves {} and coarser, not {level}",
                self.level
            )));
        }
        let mut base = CellMap::new();
        if range.is_empty() {
            return Ok(base);
        }
        // Widen to whole target buckets so coarse cells are complete.
        let (t_lo, t_hi) = range.t_span(level);
        let (f_lo, f_hi) = range.f_span(level);
        let wide = Range {
            t0_ms: t_lo * level.t_ms,
            t1_ms: t_hi * level.t_ms,
            f0_hz: f_lo as f64 * level.f_hz as f64,
            f1_hz: f_hi as f64 * level.f_hz as f64,
        };
        for (_, cells) in self.live(wide.t0_ms, wide.t1_ms) {
            base.extend(select(&cells, sensor, &wide, self.level).map(|(k, a)| (k.clone(), *a)));
        }
        coarsen(&base, self.level, level)
    }

    pub fn query(
        &self,
        sensor: &SensorId,
        range: &Range,
        level: Level,
        func: AggFn,
    ) -> Result<Vec<AggregateCell>> {
        Ok(self
            .cells(sensor, range, level)?
            .iter()
            .map(|(k, a)| AggregateCell::from_acc(k, a, level, func, Layer::Speed))
            .collect())
    }

    pub fn window_count(&self) -> usize {
        self.windows.read().expect("speed store lock").len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let snap = Snapshot {
            level: self.level,
            windows: self
                .windows
                .read()
                .expect("speed store lock")
                .iter()
                .map(|(s, c)| (*s, c.iter().map(|(k, a)| (k.clone(), *a)).collect()))
                .collect(),
        };
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(
            &tmp,
            serde_json::to_vec(&snap).expect("snapshot serializes"),
        )?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Loads a snapshot written by [`SpeedStore::save`]; expired windows are
    /// dropped.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<()> {
        let snap: Snapshot = serde_json::from_slice(&fs::read(path)?).map_err(Error::parse)?;
        if snap.level != self.level {
            return Err(Error::invalid(format!(
                "snapshot level {} does not match store level {}",
                snap.level, self.level
            )));
        }
        let cutoff = self.cutoff();
        let mut windows = self.windows.write().expect("speed store lock");
        for (start, cells) in snap.windows {
            if start + self.level.t_ms > cutoff {
                windows.insert(start, Arc::new(cells.into_iter().collect()));
            }
        }
        Ok(())
    }
}
