//! Ingestion: a TCP collector in front of a durable, partitioned,
//! replayable envelope queue.
//!
//! Envelopes are partitioned by `crc32(sensor_id) % partitions`, which keeps
//! each sensor's envelopes in order. Consumers track their own offsets.

mod collector;
mod log;
mod queue;
pub mod segment;

pub use collector::{serve_collector, CollectorClient, EnvelopeSink};
pub use log::{Log, LogConfig, LogEntry, SyncPolicy};
pub use queue::{
    partition_for, Consumed, OffsetStore, Queue, QueueConfig, DEFAULT_PARTITIONS,
    DEFAULT_RETENTION_MS,
};
