//! Speed layer: 5 s tumbling windows over the live queue, kept in a small
//! in-memory store for an hour.
//!
//! Windows are epoch-aligned and keyed by envelope `t0`. A window closes
//! once processing time reaches its end plus the allowed lateness; data for
//! a closed window is dropped and counted.

mod metrics;
mod store;
mod window;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use metrics::{MetricsSnapshot, SpeedMetrics};
pub use store::{SpeedStore, DEFAULT_SPEED_RETENTION_MS};
pub use window::{
    ClosedWindow, WindowAggregator, WindowSpec, DEFAULT_LATENESS_MS, DEFAULT_WINDOW_MS,
};

use crate::aggregate::{AggFn, AggregateCell, Level, Range};
use crate::clock::{Millis, SharedClock};
use crate::envelope::Envelope;
use crate::ingest::{OffsetStore, Queue};
use crate::{Result, SensorId};

pub const SPEED_CONSUMER: &str = "speed";
pub const DEFAULT_SPEED_F_HZ: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedConfig {
    pub window: WindowSpec,
    pub f_width_hz: u64,
    pub retention_ms: Millis,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            f_width_hz: DEFAULT_SPEED_F_HZ,
            retention_ms: DEFAULT_SPEED_RETENTION_MS,
        }
    }
}

pub struct SpeedLayer {
    agg: Mutex<WindowAggregator>,
    store: SpeedStore,
    metrics: SpeedMetrics,
    clock: SharedClock,
}

impl SpeedLayer {
    pub fn new(cfg: SpeedConfig, clock: SharedClock) -> Result<Self> {
        let agg = WindowAggregator::new(cfg.window, cfg.f_width_hz)?;
        Ok(Self {
            store: SpeedStore::new(agg.level(), cfg.retention_ms, clock.clone()),
            agg: Mutex::new(agg),
            metrics: SpeedMetrics::default(),
            clock,
        })
    }

    pub fn level(&self) -> Level {
        self.store.level()
    }

    pub fn store(&self) -> &SpeedStore {
        &self.store
    }

    pub fn metrics(&self) -> &SpeedMetrics {
        &self.metrics
    }

    pub fn ingest(&self, env: &Envelope) -> bool {
        self.agg
            .lock()
            .expect("aggregator lock")
            .ingest(env, &self.metrics)
    }

    /// Closes due windows and stores their cells.
    pub fn tick(&self) -> Vec<ClosedWindow> {
        let now = self.clock.now_ms();
        let closed = self.agg.lock().expect("aggregator lock").advance(now);
        for w in &closed {
            self.store.insert(w);
            self.metrics.window_closed(w.end_ms(), w.closed_at_ms);
        }
        closed
    }

    pub fn query(
        &self,
        sensor: &SensorId,
        range: &Range,
        level: Level,
        func: AggFn,
    ) -> Result<Vec<AggregateCell>> {
        self.store.query(sensor, range, level, func)
    }
}

/// Called for each closed window, on the worker thread.
pub type WindowListener = Arc<dyn Fn(&ClosedWindow) + Send + Sync>;
/// Receives the IQ envelopes the worker passes over.
pub type IqListener = Arc<dyn Fn(&Envelope) + Send + Sync>;

pub struct SpeedWorker {
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl SpeedWorker {
    /// Consumes every partition from the stored `speed` offsets, feeding the
    /// layer and closing windows as time passes. `poll` bounds how long the
    /// worker sleeps when the queue is idle.
    pub fn spawn(
        layer: Arc<SpeedLayer>,
        queue: Arc<Queue>,
        mut offsets: OffsetStore,
        listeners: Vec<WindowListener>,
        iq: Option<IqListener>,
        poll: Duration,
    ) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            let mut seen = queue.append_count();
            let mut last_commit = Instant::now();
            let mut dirty = false;
            while !flag.load(Ordering::Relaxed) {
                let mut lag = 0;
                for p in 0..queue.partitions() {
                    let from = offsets.get(p);
                    match queue.consume(p, from, 1024) {
                        Ok((batch, next)) => {
                            for c in &batch {
                                if c.envelope.is_psd() {
                                    layer.ingest(&c.envelope);
                                } else if let Some(iq) = &iq {
                                    iq(&c.envelope);
                                }
                            }
                            if next != from {
                                offsets.set(p, next);
                                dirty = true;
                            }
                        }
                        Err(crate::Error::OutOfRetention { log_start, .. }) => {
                            log::warn!("speed consumer behind retention on partition {p}");
                            offsets.set(p, log_start);
                        }
                        Err(e) => log::error!("speed consume on partition {p}: {e}"),
                    }
                    lag += queue.head(p).unwrap_or(0).saturating_sub(offsets.get(p));
                }
                layer.metrics.set_lag(lag);
                for w in layer.tick() {
                    for l in &listeners {
                        l(&w);
                    }
                }
                if dirty && last_commit.elapsed() >= Duration::from_millis(500) {
                    if let Err(e) = offsets.commit() {
                        log::error!("speed offset commit failed: {e}");
                    }
                    dirty = false;
                    last_commit = Instant::now();
                }
                if lag == 0 {
                    seen = queue.wait_for_append(seen, poll);
                }
            }
            if let Err(e) = offsets.commit() {
                log::error!("speed offset commit failed: {e}");
            }
        });
        Self {
            stop,
            handle: Some(handle),
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SpeedWorker {
    fn drop(&mut self) {
        self.shutdown();
    }
}
