//! Sensor software: PSD and IQ pipelines, hop scheduling and the sensor
//! agent that turns scene blocks into envelopes.

mod agent;
mod config;
mod iq;
mod psd;
mod scheduler;

pub use agent::SensorAgent;
pub use config::{
    estimate_output_rate, storage_bytes, Band, Pipeline, SensorConfig, BITS_PER_BIN, HEADER_BYTES,
};
pub use iq::{decode_payload, encode_payload, iq_pipeline, raw_iq_rate_bps, IqCodec, IqMessage};
pub use psd::{psd_pipeline, GainMeta, PsdSegment, Window};
pub use scheduler::{
    hop_centers, sweep_time_ms, HopStrategy, ScanState, BURSTINESS_ALPHA, DEFAULT_EPSILON,
};
