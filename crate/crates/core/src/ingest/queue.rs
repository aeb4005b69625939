//! Partitioned, replayable envelope queue.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::log::{Log, LogConfig};
use crate::clock::{Millis, SharedClock};
use crate::envelope::Envelope;
use crate::{Error, Result, SensorId};

pub const DEFAULT_PARTITIONS: u32 = 8;
pub const DEFAULT_RETENTION_MS: Millis = 7 * 24 * 3600 * 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueConfig {
    pub partitions: u32,
    pub retention_ms: Millis,
    #[serde(flatten)]
    pub log: LogConfig,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            partitions: DEFAULT_PARTITIONS,
            retention_ms: DEFAULT_RETENTION_MS,
            log: LogConfig::default(),
        }
    }
}

/// An envelope with its queue position.
#[derive(Clone, Debug, PartialEq)]
pub struct Consumed {
    pub partition: u32,
    pub offset: u64,
    pub envelope: Envelope,
}

pub fn partition_for(sensor: &SensorId, partitions: u32) -> u32 {
    crc32fast::hash(sensor.as_str().as_bytes()) % partitions
}

pub struct Queue {
    cfg: QueueConfig,
    clock: SharedClock,
    parts: Vec<Mutex<Log>>,
    appended: (Mutex<u64>, Condvar),
    dir: PathBuf,
}

impl Queue {
    /// Opens or creates the queue under `dir`. The partition count of an
    /// existing queue cannot change.
    pub fn open(dir: impl AsRef<Path>, cfg: QueueConfig, clock: SharedClock) -> Result<Self> {
        if cfg.partitions == 0 {
            return Err(Error::invalid("queue needs at least one partition"));
        }
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let meta = dir.join("partitions");
        match fs::read_to_string(&meta) {
            Ok(text) => {
                let n: u32 = text.trim().parse().map_err(Error::parse)?;
                if n != cfg.partitions {
                    return Err(Error::invalid(format!(
                        "queue has {n} partitions, config asks for {}",
                        cfg.partitions
                    )));
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                fs::write(&meta, cfg.partitions.to_string())?
            }
            Err(e) => return Err(e.into()),
        }
        let parts = (0..cfg.partitions)
            .map(|p| Log::open(dir.join(format!("p-{p}")), cfg.log).map(Mutex::new))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            clock,
            parts,
            appended: (Mutex::new(0), Condvar::new()),
            dir,
        })
    }

    pub fn partitions(&self) -> u32 {
        self.cfg.partitions
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn part(&self, p: u32) -> Result<std::sync::MutexGuard<'_, Log>> {
        self.parts
            .get(p as usize)
            .ok_or_else(|| Error::invalid(format!("no partition {p}")))
            .map(|m| m.lock().expect("partition lock"))
    }

    /// Appends a validated envelope; returns `(partition, offset)` once the
    /// record is written per the sync policy.
    pub fn enqueue(&self, env: &Envelope) -> Result<(u32, u64)> {
        env.validate()?;
        let p = partition_for(&env.sensor_id, self.cfg.partitions);
        let offset = self
            .part(p)?
            .append(self.clock.now_ms(), env.to_line().as_bytes())?;
        let (lock, cv) = &self.appended;
        *lock.lock().expect("append counter") += 1;
        cv.notify_all();
        Ok((p, offset))
    }

    /// Parses one wire line and enqueues it.
    pub fn enqueue_line(&self, line: &[u8]) -> Result<(u32, u64)> {
        self.enqueue(&Envelope::parse_line(line)?)
    }

    pub fn consume(&self, partition: u32, from: u64, max: usize) -> Result<(Vec<Consumed>, u64)> {
        let (entries, next) = self.part(partition)?.read(from, max)?;
        let mut out = Vec::with_capacity(entries.len());
        for e in entries {
            match Envelope::parse_line(&e.payload) {
                Ok(envelope) => out.push(Consumed {
                    partition,
                    offset: e.offset,
                    envelope,
                }),
                Err(err) => log::warn!("partition {partition} offset {}: {err}", e.offset),
            }
        }
        Ok((out, next))
    }

    /// Offset the next append to `partition` will get.
    pub fn head(&self, partition: u32) -> Result<u64> {
        Ok(self.part(partition)?.end())
    }

    pub fn log_start(&self, partition: u32) -> Result<u64> {
        Ok(self.part(partition)?.start())
    }

    pub fn corrupt_count(&self) -> u64 {
        self.parts
            .iter()
            .map(|p| p.lock().expect("partition lock").corrupt_count())
            .sum()
    }

    /// Total appends since open; pair with [`Queue::wait_for_append`].
    pub fn append_count(&self) -> u64 {
        *self.appended.0.lock().expect("append counter")
    }

    /// Blocks until the append count exceeds `seen` or `timeout` passes.
    pub fn wait_for_append(&self, seen: u64, timeout: Duration) -> u64 {
        let (lock, cv) = &self.appended;
        let guard = lock.lock().expect("append counter");
        let (guard, _) = cv
            .wait_timeout_while(guard, timeout, |n| *n <= seen)
            .expect("append counter");
        *guard
    }

    /// Drops segments older than the retention period; returns how many.
    pub fn enforce_retention(&self) -> Result<usize> {
        let cutoff = self.clock.now_ms() - self.cfg.retention_ms;
        let mut removed = 0;
        for p in &self.parts {
            removed += p.lock().expect("partition lock").retain_after(cutoff)?;
        }
        Ok(removed)
    }
}

/// Durable per-consumer offsets, one JSON file per consumer name.
pub struct OffsetStore {
    path: PathBuf,
    offsets: BTreeMap<u32, u64>,
}

impl OffsetStore {
    pub fn open(dir: impl AsRef<Path>, consumer: &str) -> Result<Self> {
        if consumer.is_empty()
            || !consumer
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::invalid(format!("bad consumer name {consumer:?}")));
        }
        let dir = dir.as_ref().join("offsets");
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{consumer}.json"));
        let offsets = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(Error::parse)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self { path, offsets })
    }

    pub fn get(&self, partition: u32) -> u64 {
        self.offsets.get(&partition).copied().unwrap_or(0)
    }

    pub fn set(&mut self, partition: u32, offset: u64) {
        self.offsets.insert(partition, offset);
    }

    /// Writes atomically (temp file plus rename).
    pub fn commit(&self) -> Result<()> {
        let tmp = self.path.with_extension("json.tmp");
        fs::write(
            &tmp,
            serde_json::to_vec(&self.offsets).expect("offsets serialize"),
        )?;
        fs::rename(&tmp, &self.path)?;
        Ok(())
    }
}
