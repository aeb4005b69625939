//! Core library of a desk-scale crowdsourced spectrum monitoring platform.
//!
//! Simulated sensors ([`scene`], [`sensor`]) run PSD and IQ pipelines and are
//! steered by a publish-subscribe control plane ([`control`]). Measurements
//! flow through a durable partitioned queue ([`ingest`]) into a batch layer
//! ([`batch`]) and a windowed speed layer ([`speed`]); the [`serving`] layer
//! fuses both behind access rules, and [`analytics`] builds occupancy,
//! white-space and RSSI results on top.
//!
//! All stored powers are linear milliwatts. Decibels appear only at the API
//! edge (see [`serving`]).

// Range checks are written `!(lo <= x && x < hi)` so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod analytics;
pub mod batch;
pub mod clock;
pub mod control;
mod dsp;
pub mod envelope;
mod error;
pub mod ids;
pub mod ingest;
pub mod platform;
pub mod scene;
pub mod sensor;
pub mod serving;
pub mod speed;

pub use error::{Error, Result};
pub use ids::{CampaignId, SensorId, UserId};

/// Lowest tunable frequency of the platform, in Hz.
pub const MIN_FREQ_HZ: f64 = 20e6;
/// Highest tunable frequency of the platform (with down-converter), in Hz.
pub const MAX_FREQ_HZ: f64 = 6e9;
