use serde::{Deserialize, Serialize};

use crate::aggregate::{AggFn, Level, Range};
use crate::clock::Millis;
use crate::serving::{Api, GridCell, Mode, QuerySpec};
use crate::{Error, Result, SensorId, UserId};

/// Broadcast TV band used as the default occupancy band.
pub const TV_BAND_HZ: (f64, f64) = (400e6, 800e6);
/// Default detector threshold above the estimated noise floor.
pub const DEFAULT_THRESHOLD_MARGIN_DB: f64 = 6.0;

/// Duty cycles on a `(t_res, f_res)` grid aligned to multiples of the
/// resolution. `None` marks buckets with no observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub sensor_id: SensorId,
    pub t_start_ms: Millis,
    pub t_res_ms: Millis,
    pub nt: usize,
    pub f_start_hz: f64,
    pub f_res_hz: u64,
    pub nf: usize,
    pub threshold_dbm: f64,
    /// Row-major, time first.
    pub duty: Vec<Option<f64>>,
}

impl OccupancyMap {
    pub fn get(&self, ti: usize, fi: usize) -> Option<f64> {
        self.duty[ti * self.nf + fi]
    }

    pub fn is_empty(&self) -> bool {
        self.duty.iter().all(Option::is_none)
    }

    pub fn f_bucket(&self, fi: usize) -> FreqRange {
        let lo = self.f_start_hz + fi as f64 * self.f_res_hz as f64;
        FreqRange {
            lo_hz: lo,
            hi_hz: lo + self.f_res_hz as f64,
        }
    }

    /// Mean duty of frequency bucket `fi` over its observed time buckets.
    pub fn time_averaged(&self, fi: usize) -> Option<f64> {
        let obs: Vec<f64> = (0..self.nt).filter_map(|ti| self.get(ti, fi)).collect();
        (!obs.is_empty()).then(|| obs.iter().sum::<f64>() / obs.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqRange {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

/// Energy-detector occupancy: each grid bucket gets the fraction of its
/// `cells` whose value exceeds `threshold_dbm`. Cells must tile the grid
/// (typically max cells at a finer level); a cell belongs to the bucket
/// containing its start.
pub fn occupancy(
    sensor: &SensorId,
    cells: &[GridCell],
    range: &Range,
    t_res_ms: Millis,
    f_res_hz: u64,
    threshold_dbm: f64,
) -> Result<OccupancyMap> {
    range.validate()?;
    let grid = Level::new(t_res_ms, f_res_hz);
    grid.validate()?;
    let (t_lo, t_hi) = range.t_span(grid);
    let (f_lo, f_hi) = range.f_span(grid);
    let nt = (t_hi - t_lo).max(0) as usize;
    let nf = (f_hi - f_lo).max(0) as usize;
    let mut above = vec![0u64; nt * nf];
    let mut total = vec![0u64; nt * nf];
    for c in cells {
        let ti = grid.t_index(c.t_start_ms) - t_lo;
        let fi = grid.f_index(c.f_start_hz) - f_lo;
        if ti < 0 || fi < 0 || ti as usize >= nt || fi as usize >= nf {
            continue;
        }
        let i = ti as usize * nf + fi as usize;
        total[i] += 1;
        if c.value_dbm.is_some_and(|v| v > threshold_dbm) {
            above[i] += 1;
        }
    }
    Ok(OccupancyMap {
        sensor_id: sensor.clone(),
        t_start_ms: t_lo * t_res_ms,
        t_res_ms,
        nt,
        f_start_hz: f_lo as f64 * f_res_hz as f64,
        f_res_hz,
        nf,
        threshold_dbm,
        duty: above
            .iter()
            .zip(&total)
            .map(|(&a, &n)| (n > 0).then(|| a as f64 / n as f64))
            .collect(),
    })
}

/// Frequency buckets whose time-averaged duty is at most `max_duty`,
/// merged into maximal contiguous ranges. Unobserved buckets are never free.
pub fn detect_whitespace(map: &OccupancyMap, max_duty: f64) -> Vec<FreqRange> {
    let mut out: Vec<FreqRange> = Vec::new();
    let mut prev_free = false;
    for fi in 0..map.nf {
        let free = map.time_averaged(fi).is_some_and(|d| d <= max_duty);
        if free {
            let b = map.f_bucket(fi);
            match out.last_mut() {
                Some(last) if prev_free => last.hi_hz = b.hi_hz,
                _ => out.push(b),
            }
        }
        prev_free = free;
    }
    out
}

/// Median of the given cell values, in dBm. Zero-power cells count as the
/// lowest values.
pub fn estimate_noise_floor_dbm(cells: &[GridCell]) -> Option<f64> {
    let mut v: Vec<f64> = cells
        .iter()
        .map(|c| c.value_dbm.unwrap_or(f64::NEG_INFINITY))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Finest of `stored` levels that tiles `target`.
pub fn finest_level(stored: impl IntoIterator<Item = Level>, target: Level) -> Option<Level> {
    stored
        .into_iter()
        .filter(|l| l.refines(&target))
        .min_by_key(|l| (l.t_ms as i128 * l.f_hz as i128, l.t_ms))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRequest {
    pub sensor: SensorId,
    pub t0_ms: Millis,
    pub t1_ms: Millis,
    pub band: (f64, f64),
    pub t_res_ms: Millis,
    pub f_res_hz: u64,
    /// Defaults to the median avg cell plus [`DEFAULT_THRESHOLD_MARGIN_DB`].
    pub threshold_dbm: Option<f64>,
}

impl OccupancyRequest {
    /// TV band at 60 s / 1 MHz.
    pub fn tv_band(sensor: SensorId, t0_ms: Millis, t1_ms: Millis) -> Self {
        Self {
            sensor,
            t0_ms,
            t1_ms,
            band: TV_BAND_HZ,
            t_res_ms: 60_000,
            f_res_hz: 1_000_000,
            threshold_dbm: None,
        }
    }

    fn range(&self) -> Range {
        Range {
            t0_ms: self.t0_ms,
            t1_ms: self.t1_ms,
            f0_hz: self.band.0,
            f1_hz: self.band.1,
        }
    }
}

/// Occupancy through the query API: max cells at the finest stored level
/// under the requested grid. Non-owners see at most the public resolution,
/// which then becomes the sub-cell level.
pub fn query_occupancy(
    api: &Api,
    who: Option<&UserId>,
    req: &OccupancyRequest,
) -> Result<OccupancyMap> {
    let target = Level::new(req.t_res_ms, req.f_res_hz);
    target.validate()?;
    let stored = api
        .batch
        .levels()
        .iter()
        .copied()
        .chain([api.speed.level()]);
    let sub = finest_level(stored, target)
        .ok_or_else(|| Error::NoSuchView(format!("no stored level tiles {target}")))?;
    let spec = |func| QuerySpec {
        sensor: req.sensor.clone(),
        range: req.range(),
        t_res_ms: sub.t_ms,
        f_res_hz: sub.f_hz,
        func,
        mode: Mode::Aggregated,
    };
    let max = api.query_aggregated(who, &spec(AggFn::Max))?;
    let threshold = match req.threshold_dbm {
        Some(t) => t,
        None => {
            let avg = api.query_aggregated(who, &spec(AggFn::Avg))?;
            match estimate_noise_floor_dbm(&avg.cells) {
                Some(n) => n + DEFAULT_THRESHOLD_MARGIN_DB,
                None => f64::INFINITY,
            }
        }
    };
    occupancy(
        &req.sensor,
        &max.cells,
        &req.range(),
        req.t_res_ms,
        req.f_res_hz,
        threshold,
    )
}
