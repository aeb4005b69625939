//! Append-only record log made of segment files.
//!
//! A log directory holds `<base_offset>.seg` files. Offsets are dense: every
//! framed record, including ones that later fail their checksum, owns one.
//! Opening a log truncates a torn tail left by an interrupted append.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::segment::{self, Decoded, HEADER_LEN, RECORD_OVERHEAD};
use crate::clock::Millis;
use crate::{Error, Result};

/// When an append counts as done.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncPolicy {
    /// Written to the OS before returning; survives a process crash.
    #[default]
    Flush,
    /// Also `fsync`ed; survives power loss.
    Fsync,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogConfig {
    pub segment_bytes: u64,
    pub sync: SyncPolicy,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self {
            segment_bytes: 64 << 20,
            sync: SyncPolicy::Flush,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub offset: u64,
    pub time_ms: Millis,
    pub payload: Vec<u8>,
}

struct Segment {
    base: u64,
    path: PathBuf,
    file: File,
    positions: Vec<u64>,
    times: Vec<Option<Millis>>,
    bytes: u64,
}

impl Segment {
    fn end(&self) -> u64 {
        self.base + self.positions.len() as u64
    }

    fn max_time(&self) -> Option<Millis> {
        self.times.iter().flatten().copied().max()
    }
}

pub struct Log {
    dir: PathBuf,
    cfg: LogConfig,
    segments: Vec<Segment>,
    corrupt: u64,
}

fn segment_path(dir: &Path, base: u64) -> PathBuf {
    dir.join(format!("{base:020}.seg"))
}

impl Log {
    pub fn open(dir: impl AsRef<Path>, cfg: LogConfig) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "seg"))
            .collect();
        paths.sort();
        let mut log = Self {
            dir,
            cfg,
            segments: Vec::new(),
            corrupt: 0,
        };
        for path in paths {
            let bytes = fs::read(&path)?;
            let scan = segment::scan_segment(&bytes)?;
            let file = OpenOptions::new().read(true).append(true).open(&path)?;
            if scan.valid_len < bytes.len() as u64 {
                log::warn!(
                    "{}: truncating {} torn bytes",
                    path.display(),
                    bytes.len() as u64 - scan.valid_len
                );
                file.set_len(scan.valid_len)?;
            }
            log.corrupt += scan.records.iter().filter(|r| r.1.is_none()).count() as u64;
            let (positions, times) = scan.records.into_iter().unzip();
            log.segments.push(Segment {
                base: scan.base_offset,
                path,
                file,
                positions,
                times,
                bytes: scan.valid_len,
            });
        }
        if log.segments.is_empty() {
            log.roll(0)?;
        }
        Ok(log)
    }

    fn roll(&mut self, base: u64) -> Result<()> {
        let path = segment_path(&self.dir, base);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        file.set_len(0)?;
        file.write_all(&segment::encode_header(base))?;
        if self.cfg.sync == SyncPolicy::Fsync {
            file.sync_all()?;
        }
        self.segments.push(Segment {
            base,
            path,
            file,
            positions: Vec::new(),
            times: Vec::new(),
            bytes: HEADER_LEN as u64,
        });
        Ok(())
    }

    /// First retained offset.
    pub fn start(&self) -> u64 {
        self.segments[0].base
    }

    /// Offset the next append will get.
    pub fn end(&self) -> u64 {
        self.segments.last().expect("log has a segment").end()
    }

    /// Records found corrupt so far, at open or on read.
    pub fn corrupt_count(&self) -> u64 {
        self.corrupt
    }

    pub fn append(&mut self, time_ms: Millis, payload: &[u8]) -> Result<u64> {
        if payload.len() > segment::MAX_RECORD_BYTES {
            return Err(Error::invalid("record too large"));
        }
        let rec = segment::encode_record(time_ms, payload);
        let active = self.segments.last().expect("log has a segment");
        if !active.positions.is_empty() && active.bytes + rec.len() as u64 > self.cfg.segment_bytes
        {
            let base = active.end();
            self.roll(base)?;
        }
        let sync = self.cfg.sync;
        let seg = self.segments.last_mut().expect("log has a segment");
        if let Err(e) = seg.file.write_all(&rec) {
            // Leave no partial record behind for the next append.
            let _ = seg.file.set_len(seg.bytes);
            return Err(e.into());
        }
        if sync == SyncPolicy::Fsync {
            seg.file.sync_data()?;
        }
        let offset = seg.end();
        seg.positions.push(seg.bytes);
        seg.times.push(Some(time_ms));
        seg.bytes += rec.len() as u64;
        Ok(offset)
    }

    fn read_at(&mut self, si: usize, idx: usize) -> Result<Option<LogEntry>> {
        let seg = &self.segments[si];
        if seg.times[idx].is_none() {
            return Ok(None);
        }
        let pos = seg.positions[idx];
        let mut head = [0u8; 4];
        seg.file.read_exact_at(&mut head, pos)?;
        let n = u32::from_le_bytes(head) as usize;
        let mut buf = vec![0u8; n.min(segment::MAX_RECORD_BYTES) + RECORD_OVERHEAD];
        seg.file.read_exact_at(&mut buf, pos)?;
        match segment::decode_record(&buf) {
            Ok(Decoded::Record {
                time_ms, payload, ..
            }) => Ok(Some(LogEntry {
                offset: seg.base + idx as u64,
                time_ms,
                payload: payload.to_vec(),
            })),
            _ => {
                log::warn!("{}: record {} failed its checksum", seg.path.display(), idx);
                self.segments[si].times[idx] = None;
                self.corrupt += 1;
                Ok(None)
            }
        }
    }

    /// Up to `max` entries from `from`, plus the offset to continue at.
    /// Corrupt records are skipped. Reading past the end is not an error.
    pub fn read(&mut self, from: u64, max: usize) -> Result<(Vec<LogEntry>, u64)> {
        let mut out = Vec::new();
        let next = self.scan(from, |e| {
            out.push(e);
            Ok(out.len() < max)
        })?;
        Ok((out, next))
    }

    /// Feeds entries from `from` to `f` until it returns `false` or the log
    /// ends. Returns the offset after the last entry examined.
    pub fn scan(&mut self, from: u64, mut f: impl FnMut(LogEntry) -> Result<bool>) -> Result<u64> {
        let start = self.start();
        if from < start {
            return Err(Error::OutOfRetention {
                offset: from,
                log_start: start,
            });
        }
        let mut offset = from;
        let first = self.segments.partition_point(|s| s.end() <= from);
        for si in first..self.segments.len() {
            let (base, len) = (self.segments[si].base, self.segments[si].positions.len());
            let mut idx = (offset - base) as usize;
            while idx < len {
                let entry = self.read_at(si, idx)?;
                idx += 1;
                offset = base + idx as u64;
                if let Some(e) = entry {
                    if !f(e)? {
                        return Ok(offset);
                    }
                }
            }
        }
        Ok(offset.max(from))
    }

    /// Offsets whose record time lies in `[t_lo, t_hi)`, without reading
    /// payloads.
    pub fn offsets_in_time(&self, t_lo: Millis, t_hi: Millis) -> Vec<u64> {
        let mut out = Vec::new();
        for seg in &self.segments {
            for (i, t) in seg.times.iter().enumerate() {
                if matches!(t, Some(t) if (t_lo..t_hi).contains(t)) {
                    out.push(seg.base + i as u64);
                }
            }
        }
        out
    }

    /// Reads one offset; `None` if corrupt or not present.
    pub fn get(&mut self, offset: u64) -> Result<Option<LogEntry>> {
        if offset < self.start() || offset >= self.end() {
            return Ok(None);
        }
        let si = self.segments.partition_point(|s| s.end() <= offset);
        let idx = (offset - self.segments[si].base) as usize;
        self.read_at(si, idx)
    }

    /// Deletes whole segments whose newest record is older than `cutoff`.
    /// The active segment is never deleted. Returns the number removed.
    pub fn retain_after(&mut self, cutoff: Millis) -> Result<usize> {
        let mut removed = 0;
        while self.segments.len() > 1 {
            let old = &self.segments[0];
            if old.max_time().is_some_and(|t| t >= cutoff) {
                break;
            }
            fs::remove_file(&old.path)?;
            self.segments.remove(0);
            removed += 1;
        }
        Ok(removed)
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
