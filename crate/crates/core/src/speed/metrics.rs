use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::clock::Millis;

/// Speed-layer counters, exposed on the metrics endpoint.
#[derive(Debug, Default)]
pub struct SpeedMetrics {
    envelopes: AtomicU64,
    late_drops: AtomicU64,
    duplicates: AtomicU64,
    windows_closed: AtomicU64,
    lag_offsets: AtomicU64,
    last_window_end_ms: AtomicI64,
    last_close_delay_ms: AtomicI64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub envelopes: u64,
    pub late_drops: u64,
    pub duplicates: u64,
    pub windows_closed: u64,
    /// Queue records not yet consumed, over all partitions.
    pub lag_offsets: u64,
    pub last_window_end_ms: Millis,
    /// Processing time from window end to its cells being stored.
    pub last_close_delay_ms: Millis,
}

impl SpeedMetrics {
    pub(crate) fn inc_envelopes(&self) {
        self.envelopes.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn inc_late_drops(&self) {
        self.late_drops.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn inc_duplicates(&self) {
        self.duplicates.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn window_closed(&self, end_ms: Millis, closed_at_ms: Millis) {
        self.windows_closed.fetch_add(1, Ordering::Relaxed);
        self.last_window_end_ms.fetch_max(end_ms, Ordering::Relaxed);
        self.last_close_delay_ms
            .store(closed_at_ms - end_ms, Ordering::Relaxed);
    }

    pub(crate) fn set_lag(&self, lag: u64) {
        self.lag_offsets.store(lag, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            envelopes: self.envelopes.load(Ordering::Relaxed),
            late_drops: self.late_drops.load(Ordering::Relaxed),
            duplicates: self.duplicates.load(Ordering::Relaxed),
            windows_closed: self.windows_closed.load(Ordering::Relaxed),
            lag_offsets: self.lag_offsets.load(Ordering::Relaxed),
            last_window_end_ms: self.last_window_end_ms.load(Ordering::Relaxed),
            last_close_delay_ms: self.last_close_delay_ms.load(Ordering::Relaxed),
        }
    }
}
