use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::metrics::SpeedMetrics;
use crate::aggregate::{fold_segment, CellMap, Level};
use crate::clock::Millis;
use crate::envelope::Envelope;
use crate::{Error, Result, SensorId};

pub const DEFAULT_WINDOW_MS: Millis = 5_000;
pub const DEFAULT_LATENESS_MS: Millis = 2_000;

/// Epoch-aligned tumbling windows with a fixed allowed lateness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub width_ms: Millis,
    pub lateness_ms: Millis,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            width_ms: DEFAULT_WINDOW_MS,
            lateness_ms: DEFAULT_LATENESS_MS,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_ms <= 0 || self.lateness_ms < 0 {
            return Err(Error::invalid("window width must be > 0 and lateness >= 0"));
        }
        Ok(())
    }

    /// Start of the window holding `t`.
    pub fn window_start(&self, t: Millis) -> Millis {
        t.div_euclid(self.width_ms) * self.width_ms
    }

    /// Processing time at which the window starting at `start` closes.
    pub fn close_time(&self, start: Millis) -> Millis {
        start + self.width_ms + self.lateness_ms
    }
}

/// Cells of one closed window at the speed level.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedWindow {
    pub start_ms: Millis,
    pub level: Level,
    pub cells: CellMap,
    pub closed_at_ms: Millis,
}

impl ClosedWindow {
    pub fn end_ms(&self) -> Millis {
        self.start_ms + self.level.t_ms
    }

    pub fn sensors(&self) -> Vec<SensorId> {
        let mut s: Vec<SensorId> = self.cells.keys().map(|k| k.sensor.clone()).collect();
        s.dedup();
        s
    }
}

#[derive(Default)]
struct OpenWindow {
    cells: CellMap,
    seen: HashSet<(SensorId, u64)>,
}

/// Assigns PSD envelopes to windows by `t0` and closes windows once
/// processing time passes their end plus the lateness allowance.
pub struct WindowAggregator {
    spec: WindowSpec,
    level: Level,
    open: BTreeMap<i64, OpenWindow>,
    /// Windows with index below this are closed.
    closed_before: i64,
}

impl WindowAggregator {
    pub fn new(spec: WindowSpec, f_width_hz: u64) -> Result<Self> {
        spec.validate()?;
        let level = Level::new(spec.width_ms, f_width_hz);
        level.validate()?;
        Ok(Self {
            spec,
            level,
            open: BTreeMap::new(),
            closed_before: i64::MIN,
        })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    /// Folds a PSD envelope into its window. Returns `false` for late,
    /// duplicate or non-PSD envelopes.
    pub fn ingest(&mut self, env: &Envelope, metrics: &SpeedMetrics) -> bool {
        let Some(seg) = env.to_segment() else {
            return false;
        };
        metrics.inc_envelopes();
        let idx = self.level.t_index(seg.t0);
        if idx < self.closed_before {
            metrics.inc_late_drops();
            return false;
        }
        let w = self.open.entry(idx).or_default();
        if !w.seen.insert(env.key()) {
            metrics.inc_duplicates();
            return false;
        }
        fold_segment(&mut w.cells, &seg, self.level);
        true
    }

    /// Closes every window whose close time is at or before `now`, oldest
    /// first. Windows that saw no data produce nothing.
    pub fn advance(&mut self, now: Millis) -> Vec<ClosedWindow> {
        let limit = (now - self.spec.lateness_ms).div_euclid(self.spec.width_ms);
        if limit <= self.closed_before {
            return Vec::new();
        }
        self.closed_before = limit;
        let still_open = self.open.split_off(&limit);
        let closed = std::mem::replace(&mut self.open, still_open);
        closed
            .into_iter()
            .filter(|(_, w)| !w.cells.is_empty())
            .map(|(idx, w)| ClosedWindow {
                start_ms: idx * self.spec.width_ms,
                level: self.level,
                cells: w.cells,
                closed_at_ms: now,
            })
            .collect()
    }

    pub fn open_windows(&self) -> usize {
        self.open.len()
    }
}
