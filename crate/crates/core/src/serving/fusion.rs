//! Batch/speed fusion at a requested grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::{coarsen, AggFn, AggregateCell, CellMap, Layer, Level, Range};
use crate::batch::{select, TableSet};
use crate::clock::Millis;
use crate::speed::SpeedStore;
use crate::{Error, Result, SensorId};

/// Coarsest stored level whose buckets tile `target`.
pub fn source_level(stored: impl IntoIterator<Item = Level>, target: Level) -> Option<Level> {
    stored
        .into_iter()
        .filter(|l| l.refines(&target))
        .max_by_key(|l| (l.t_ms, l.f_hz))
}

/// Range widened to whole buckets of `level`.
fn widen(range: &Range, level: Level) -> Range {
    let (t_lo, t_hi) = range.t_span(level);
    let (f_lo, f_hi) = range.f_span(level);
    Range {
        t0_ms: t_lo * level.t_ms,
        t1_ms: t_hi * level.t_ms,
        f0_hz: f_lo as f64 * level.f_hz as f64,
        f1_hz: f_hi as f64 * level.f_hz as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedView {
    pub cells: Vec<AggregateCell>,
    /// Buckets ending at or before this come from the batch layer whenever
    /// it has them.
    pub batch_horizon_ms: Millis,
}

/// Cells of `sensor` at `target` over `range`. Each bucket appears once:
/// the batch cell for buckets the batch layer has sealed, otherwise the
/// speed cell, otherwise a batch cell still being filled.
pub fn fused_view(
    batch: &TableSet,
    speed: Option<&SpeedStore>,
    sensor: &SensorId,
    range: &Range,
    target: Level,
    func: AggFn,
) -> Result<FusedView> {
    range.validate()?;
    target.validate()?;
    let batch_src = source_level(batch.levels.keys().copied(), target);
    let speed_ok = speed.is_some_and(|s| s.level().refines(&target));
    if batch_src.is_none() && !speed_ok {
        return Err(Error::NoSuchView(format!("no stored level tiles {target}")));
    }
    let wide = widen(range, target);

    let (batch_cells, horizon) = match batch_src {
        Some(src) => {
            let table = &batch.levels[&src];
            let cells = coarsen(select(&table.cells, sensor, &wide, src), src, target)?;
            (cells, table.horizon_ms)
        }
        None => (CellMap::new(), Millis::MIN),
    };
    let speed_cells = match speed {
        Some(s) if speed_ok => s.cells(sensor, &wide, target)?,
        _ => CellMap::new(),
    };

    let mut out: BTreeMap<(i64, i64), AggregateCell> = BTreeMap::new();
    for (k, a) in &speed_cells {
        out.insert(
            (k.t, k.f),
            AggregateCell::from_acc(k, a, target, func, Layer::Speed),
        );
    }
    for (k, a) in &batch_cells {
        let sealed = (k.t + 1) * target.t_ms <= horizon;
        if sealed || !out.contains_key(&(k.t, k.f)) {
            out.insert(
                (k.t, k.f),
                AggregateCell::from_acc(k, a, target, func, Layer::Batch),
            );
        }
    }
    Ok(FusedView {
        cells: out.into_values().collect(),
        batch_horizon_ms: horizon,
    })
}
