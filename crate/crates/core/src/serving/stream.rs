//! Live fan-out of closed speed windows.
//!
//! Each subscriber has a bounded queue; when it is full the oldest record
//! is dropped and counted. Owners get every 5 s window of their sensors.
//! Capped subscribers get 60 s records at no finer than 100 kHz, emitted
//! once the minute is over, so the stream never leaks finer resolution
//! than the aggregated API.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::access::{Grant, PUBLIC_MIN_F_RES_HZ, PUBLIC_MIN_T_RES_MS};
use super::to_dbm;
use crate::aggregate::{coarsen, Acc, CellKey, CellMap, Layer, Level};
use crate::clock::Millis;
use crate::speed::ClosedWindow;
use crate::SensorId;

pub const DEFAULT_SUBSCRIBER_CAPACITY: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamCell {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub avg_dbm: Option<f64>,
    pub max_dbm: Option<f64>,
    pub count: u64,
}

/// One sensor's cells for one window; one JSON line on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub sensor_id: SensorId,
    pub t_start_ms: Millis,
    pub t_res_ms: Millis,
    pub f_res_hz: u64,
    pub layer: Layer,
    pub cells: Vec<StreamCell>,
}

impl StreamRecord {
    fn build(
        sensor: &SensorId,
        t: i64,
        level: Level,
        cells: &[(&CellKey, &Acc)],
        f0: f64,
        f1: f64,
    ) -> Option<Self> {
        let w = level.f_hz as f64;
        let cells: Vec<StreamCell> = cells
            .iter()
            .filter(|(k, _)| {
                let lo = k.f as f64 * w;
                lo < f1 && lo + w > f0
            })
            .map(|(k, a)| StreamCell {
                f_start_hz: k.f as f64 * w,
                f_end_hz: (k.f + 1) as f64 * w,
                avg_dbm: to_dbm(a.avg()),
                max_dbm: to_dbm(a.max),
                count: a.count,
            })
            .collect();
        (!cells.is_empty()).then(|| StreamRecord {
            sensor_id: sensor.clone(),
            t_start_ms: t * level.t_ms,
            t_res_ms: level.t_ms,
            f_res_hz: level.f_hz,
            layer: Layer::Speed,
            cells,
        })
    }
}

struct SubQueue {
    records: Mutex<VecDeque<StreamRecord>>,
    ready: Condvar,
    dropped: AtomicU64,
    closed: AtomicBool,
}

struct Sub {
    id: u64,
    grants: HashMap<SensorId, Grant>,
    f0: f64,
    f1: f64,
    queue: Arc<SubQueue>,
}

#[derive(Default)]
struct Inner {
    subs: Vec<Sub>,
    next_id: u64,
    /// Capped-resolution accumulators per sensor, keyed by minute index.
    pending: BTreeMap<SensorId, CellMap>,
}

pub struct StreamHub {
    inner: Arc<Mutex<Inner>>,
    capacity: usize,
}

impl Default for StreamHub {
    fn default() -> Self {
        Self::new(DEFAULT_SUBSCRIBER_CAPACITY)
    }
}

impl StreamHub {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Arc::default(),
            capacity: capacity.max(1),
        }
    }

    /// Registers a subscriber; `grants` must already be authorized.
    pub fn subscribe(&self, grants: HashMap<SensorId, Grant>, f0: f64, f1: f64) -> Subscription {
        let queue = Arc::new(SubQueue {
            records: Mutex::default(),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        });
        let mut inner = self.inner.lock().expect("hub lock");
        let id = inner.next_id;
        inner.next_id += 1;
        inner.subs.push(Sub {
            id,
            grants,
            f0,
            f1,
            queue: queue.clone(),
        });
        Subscription {
            id,
            queue,
            hub: Arc::downgrade(&self.inner),
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.lock().expect("hub lock").subs.len()
    }

    /// Fans a closed window out to every subscriber.
    pub fn publish(&self, w: &ClosedWindow) {
        let mut inner = self.inner.lock().expect("hub lock");
        let capped = Level::new(
            PUBLIC_MIN_T_RES_MS.max(w.level.t_ms),
            PUBLIC_MIN_F_RES_HZ.max(w.level.f_hz),
        );
        let wants_capped = inner
            .subs
            .iter()
            .any(|s| s.grants.values().any(|g| *g == Grant::Capped));

        let mut by_sensor: BTreeMap<&SensorId, Vec<(&CellKey, &Acc)>> = BTreeMap::new();
        for (k, a) in &w.cells {
            by_sensor.entry(&k.sensor).or_default().push((k, a));
        }

        let t = w.level.t_index(w.start_ms);

        // Capped records: accumulate, then emit minutes that are over.
        let mut coarse: Vec<(SensorId, i64, CellMap)> = Vec::new();
        if wants_capped && w.level.refines(&capped) {
            for (sensor, cells) in &by_sensor {
                let merged =
                    coarsen(cells.iter().copied(), w.level, capped).expect("capped level coarsens");
                let pending = inner.pending.entry((*sensor).clone()).or_default();
                for (k, a) in merged {
                    pending.entry(k).and_modify(|x| x.merge(&a)).or_insert(a);
                }
            }
            let done_before = w.end_ms().div_euclid(capped.t_ms);
            for (sensor, pending) in inner.pending.iter_mut() {
                let keep = pending.split_off(&CellKey {
                    sensor: sensor.clone(),
                    t: done_before,
                    f: i64::MIN,
                });
                let done = std::mem::replace(pending, keep);
                let mut by_t: BTreeMap<i64, CellMap> = BTreeMap::new();
                for (k, a) in done {
                    by_t.entry(k.t).or_default().insert(k, a);
                }
                for (t, cells) in by_t {
                    coarse.push((sensor.clone(), t, cells));
                }
            }
        }

        for sub in &inner.subs {
            for (sensor, cells) in &by_sensor {
                if sub.grants.get(*sensor) == Some(&Grant::Owner) {
                    if let Some(rec) =
                        StreamRecord::build(sensor, t, w.level, cells, sub.f0, sub.f1)
                    {
                        push(&sub.queue, rec, self.capacity);
                    }
                }
            }
            for (sensor, t, cells) in &coarse {
                if sub.grants.get(sensor) == Some(&Grant::Capped) {
                    let entries: Vec<_> = cells.iter().collect();
                    if let Some(rec) =
                        StreamRecord::build(sensor, *t, capped, &entries, sub.f0, sub.f1)
                    {
                        push(&sub.queue, rec, self.capacity);
                    }
                }
            }
        }
        if !wants_capped {
            inner.pending.clear();
        }
    }
}

fn push(q: &SubQueue, rec: StreamRecord, capacity: usize) {
    let mut records = q.records.lock().expect("subscriber lock");
    if records.len() >= capacity {
        records.pop_front();
        q.dropped.fetch_add(1, Ordering::Relaxed);
    }
    records.push_back(rec);
    q.ready.notify_all();
}

/// A live subscription; dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    queue: Arc<SubQueue>,
    hub: Weak<Mutex<Inner>>,
}

impl Subscription {
    /// Next record, waiting up to `timeout`. `None` on timeout or after the
    /// hub is gone.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<StreamRecord> {
        let records = self.queue.records.lock().expect("subscriber lock");
        let (mut records, _) = self
            .queue
            .ready
            .wait_timeout_while(records, timeout, |r| {
                r.is_empty() && !self.queue.closed.load(Ordering::Relaxed)
            })
            .expect("subscriber lock");
        records.pop_front()
    }

    pub fn try_recv(&self) -> Option<StreamRecord> {
        self.queue
            .records
            .lock()
            .expect("subscriber lock")
            .pop_front()
    }

    /// Records discarded because this subscriber fell behind.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn is_closed(&self) -> bool {
        self.queue.closed.load(Ordering::Relaxed) || self.hub.strong_count() == 0
    }

    pub fn sensors(&self) -> BTreeSet<SensorId> {
        self.hub
            .upgrade()
            .map(|h| {
                h.lock()
                    .expect("hub lock")
                    .subs
                    .iter()
                    .find(|s| s.id == self.id)
                    .map(|s| s.grants.keys().cloned().collect())
                    .unwrap_or_default()
            })
            .unwrap_or_default()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.queue.closed.store(true, Ordering::Relaxed);
        if let Some(h) = self.hub.upgrade() {
            h.lock().expect("hub lock").subs.retain(|s| s.id != self.id);
        }
    }
}
