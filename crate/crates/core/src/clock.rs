//! Time sources. All platform timestamps are milliseconds since the Unix
//! epoch (UTC).

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

pub type Millis = i64;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;

    /// Blocks until `now_ms() >= t`.
    fn sleep_until(&self, t: Millis) {
        loop {
            let now = self.now_ms();
            if now >= t {
                return;
            }
            std::thread::sleep(Duration::from_millis((t - now).clamp(1, 20) as u64));
        }
    }
}

pub type SharedClock = Arc<dyn Clock>;

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Millis)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicI64,
}

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        Self {
            now: AtomicI64::new(start),
        }
    }

    pub fn set(&self, t: Millis) {
        self.now.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, dt: Millis) -> Millis {
        self.now.fetch_add(dt, Ordering::SeqCst) + dt
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Millis {
        self.now.load(Ordering::SeqCst)
    }
}

/// Real time running `factor` times faster than the wall clock, starting at
/// `origin`.
///
/// Used by latency harnesses: processing delays are real, so they are
/// stretched by `factor` in simulated time, which makes measured latencies an
/// upper bound of what the same code would show at 1x.
#[derive(Debug)]
pub struct ScaledClock {
    origin: Millis,
    started: Instant,
    factor: f64,
}

impl ScaledClock {
    pub fn new(origin: Millis, factor: f64) -> Self {
        assert!(factor > 0.0, "clock factor must be positive");
        Self {
            origin,
            started: Instant::now(),
            factor,
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// Real duration corresponding to `ms` of simulated time.
    pub fn real_duration(&self, ms: Millis) -> Duration {
        Duration::from_secs_f64(ms.max(0) as f64 / 1000.0 / self.factor)
    }
}

impl Clock for ScaledClock {
    fn now_ms(&self) -> Millis {
        let elapsed = self.started.elapsed().as_secs_f64() * 1000.0 * self.factor;
        self.origin + elapsed as Millis
    }

    fn sleep_until(&self, t: Millis) {
        loop {
            let now = self.now_ms();
            if now >= t {
                return;
            }
            let d = self.real_duration(t - now).min(Duration::from_millis(20));
            std::thread::sleep(d.max(Duration::from_micros(100)));
        }
    }
}
