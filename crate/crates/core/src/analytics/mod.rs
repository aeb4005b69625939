//! Reference applications over query results: occupancy and white-space
//! detection, calibrated RSSI, and the periodic-packet capture replay.

mod lora;
mod occupancy;
mod rssi;

pub use lora::{lora_replay, LoraReplay, PacketTrain};
pub use occupancy::{
    detect_whitespace, estimate_noise_floor_dbm, finest_level, occupancy, query_occupancy,
    FreqRange, OccupancyMap, OccupancyRequest, DEFAULT_THRESHOLD_MARGIN_DB, TV_BAND_HZ,
};
pub use rssi::{calibrated_rssi, CalibrationProfile};
