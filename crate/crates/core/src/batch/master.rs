//! Immutable master dataset of PSD envelopes, deduplicated by
//! `(sensor_id, seq)`.
//!
//! Stored with the ingestion segment format; the record time is the
//! segment's `t0`, so time-range scans skip payloads outside the range.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::envelope::Envelope;
use crate::ingest::{Log, LogConfig, OffsetStore, Queue};
use crate::sensor::PsdSegment;
use crate::{Error, Result, SensorId};

pub const BATCH_CONSUMER: &str = "batch";
const CONSUME_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactReport {
    pub appended: u64,
    pub duplicates: u64,
    /// IQ envelopes are transient and never enter the master dataset.
    pub skipped_iq: u64,
}

pub struct MasterDataset {
    log: Log,
    seen: HashSet<(SensorId, u64)>,
    earliest: Option<Millis>,
    offsets: OffsetStore,
}

impl MasterDataset {
    /// Opens `dir/master`, with consumer offsets kept in `dir`.
    pub fn open(dir: impl AsRef<Path>, cfg: LogConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let mut log = Log::open(dir.join("master"), cfg)?;
        let mut seen = HashSet::new();
        let mut earliest: Option<Millis> = None;
        let start = log.start();
        log.scan(start, |e| {
            match Envelope::parse_line(&e.payload) {
                Ok(env) => {
                    seen.insert(env.key());
                    earliest = Some(earliest.map_or(e.time_ms, |t| t.min(e.time_ms)));
                }
                Err(err) => log::warn!("master offset {}: {err}", e.offset),
            }
            Ok(true)
        })?;
        Ok(Self {
            log,
            seen,
            earliest,
            offsets: OffsetStore::open(dir, BATCH_CONSUMER)?,
        })
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn corrupt_count(&self) -> u64 {
        self.log.corrupt_count()
    }

    /// Smallest `t0` stored.
    pub fn earliest_t0(&self) -> Option<Millis> {
        self.earliest
    }

    /// Appends `env` unless it is a duplicate or not a PSD envelope.
    /// Returns whether it was appended.
    pub fn insert(&mut self, env: &Envelope, report: &mut CompactReport) -> Result<bool> {
        if !env.is_psd() {
            report.skipped_iq += 1;
            return Ok(false);
        }
        if self.seen.contains(&(env.sensor_id.clone(), env.seq)) {
            report.duplicates += 1;
            return Ok(false);
        }
        self.log.append(env.t0_ms(), env.to_line().as_bytes())?;
        self.seen.insert(env.key());
        let t0 = env.t0_ms();
        self.earliest = Some(self.earliest.map_or(t0, |t| t.min(t0)));
        report.appended += 1;
        Ok(true)
    }

    /// Pulls everything new from the queue. Offsets are committed after the
    /// records are appended, so a crash in between only causes duplicates,
    /// which dedup absorbs.
    pub fn compact(&mut self, queue: &Queue) -> Result<CompactReport> {
        let mut report = CompactReport::default();
        for p in 0..queue.partitions() {
            let mut from = self.offsets.get(p);
            loop {
                let (batch, next) = match queue.consume(p, from, CONSUME_CHUNK) {
                    Ok(r) => r,
                    Err(Error::OutOfRetention { log_start, .. }) => {
                        log::warn!("batch consumer fell behind retention on partition {p}; skipping to {log_start}");
                        from = log_start;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for c in &batch {
                    self.insert(&c.envelope, &mut report)?;
                }
                if next == from {
                    break;
                }
                from = next;
            }
            self.offsets.set(p, from);
            self.offsets.commit()?;
        }
        Ok(report)
    }

    /// Forgets the batch consumer's queue offsets so the next compaction
    /// replays the whole retained queue.
    pub fn reset_offsets(&mut self, partitions: u32) -> Result<()> {
        for p in 0..partitions {
            self.offsets.set(p, 0);
        }
        self.offsets.commit()
    }

    /// Segments with `t0` in `[t_lo, t_hi)`, in master order.
    pub fn segments_in(
        &mut self,
        t_lo: Millis,
        t_hi: Millis,
        mut f: impl FnMut(PsdSegment),
    ) -> Result<()> {
        for off in self.log.offsets_in_time(t_lo, t_hi) {
            if let Some(e) = self.log.get(off)? {
                match Envelope::parse_line(&e.payload) {
                    Ok(env) => {
                        if let Some(seg) = env.to_segment() {
                            f(seg)
                        }
                    }
                    Err(err) => log::warn!("master offset {off}: {err}"),
                }
            }
        }
        Ok(())
    }

    /// Every master envelope, in master order.
    pub fn envelopes(&mut self) -> Result<Vec<Envelope>> {
        let mut out = Vec::with_capacity(self.seen.len());
        let start = self.log.start();
        self.log.scan(start, |e| {
            if let Ok(env) = Envelope::parse_line(&e.payload) {
                out.push(env);
            }
            Ok(true)
        })?;
        Ok(out)
    }
}
