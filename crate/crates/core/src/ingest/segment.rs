//! On-disk segment format shared by the queue partitions and the master
//! dataset.
//!
//! ```text
//! header:  "SPML" | version: u32 | base_offset: u64          (16 bytes)
//! record:  len: u32 | time_ms: i64 | payload[len] | crc32: u32
//! ```
//!
//! All integers are little-endian. The checksum covers `len`, `time_ms` and
//! the payload. A record whose bytes run past the end of the file is a torn
//! tail from an interrupted append.

use crate::clock::Millis;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SPML";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
/// Bytes a record adds on top of its payload.
pub const RECORD_OVERHEAD: usize = 4 + 8 + 4;
/// Largest payload accepted; anything bigger is treated as corruption.
pub const MAX_RECORD_BYTES: usize = 128 << 20;

pub fn encode_header(base_offset: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..].copy_from_slice(&base_offset.to_le_bytes());
    h
}

/// Returns the base offset.
pub fn decode_header(buf: &[u8]) -> Result<u64> {
    if buf.len() < HEADER_LEN {
        return Err(Error::parse("segment header truncated"));
    }
    if buf[..4] != MAGIC {
        return Err(Error::parse("bad segment magic"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::parse(format!(
            "unsupported segment version {version}"
        )));
    }
    Ok(u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")))
}

pub fn encode_record(time_ms: Millis, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + RECORD_OVERHEAD);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&time_ms.to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

#[derive(Debug, PartialEq, Eq)]
pub enum Decoded<'a> {
    Record {
        time_ms: Millis,
        payload: &'a [u8],
        len: usize,
    },
    /// The buffer ends inside a record.
    Incomplete,
    /// A complete record with a bad checksum; `len` bytes can be skipped.
    Corrupt { len: usize },
}

/// Decodes the record at the start of `buf`.
///
/// Errors only when the length prefix is implausible, in which case the
/// rest of the buffer cannot be framed.
pub fn decode_record(buf: &[u8]) -> Result<Decoded<'_>> {
    if buf.len() < 4 {
        return Ok(Decoded::Incomplete);
    }
    let n = u32::from_le_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
    if n > MAX_RECORD_BYTES {
        return Err(Error::parse(format!("record length {n} exceeds limit")));
    }
    let total = n + RECORD_OVERHEAD;
    if buf.len() < total {
        return Ok(Decoded::Incomplete);
    }
    let body = &buf[..12 + n];
    let stored = u32::from_le_bytes(buf[12 + n..total].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Ok(Decoded::Corrupt { len: total });
    }
    Ok(Decoded::Record {
        time_ms: i64::from_le_bytes(buf[4..12].try_into().expect("8 bytes")),
        payload: &buf[12..12 + n],
        len: total,
    })
}

/// Framing of one segment file's bytes.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct SegmentScan {
    pub base_offset: u64,
    /// Byte position and time of every framed record; `None` time marks a
    /// corrupt record that keeps its offset but is never delivered.
    pub records: Vec<(u64, Option<Millis>)>,
    /// Length of the well-framed prefix; bytes after it are a torn tail.
    pub valid_len: u64,
}

pub fn scan_segment(bytes: &[u8]) -> Result<SegmentScan> {
    let base_offset = decode_header(bytes)?;
    let mut scan = SegmentScan {
        base_offset,
        ..Default::default()
    };
    let mut pos = HEADER_LEN;
    loop {
        match decode_record(&bytes[pos..]) {
            Ok(Decoded::Record { time_ms, len, .. }) => {
                scan.records.push((pos as u64, Some(time_ms)));
                pos += len;
            }
            Ok(Decoded::Corrupt { len }) => {
                scan.records.push((pos as u64, None));
                pos += len;
            }
            Ok(Decoded::Incomplete) | Err(_) => break,
        }
    }
    scan.valid_len = pos as u64;
    Ok(scan)
}
