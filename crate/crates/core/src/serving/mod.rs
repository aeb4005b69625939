//! Serving layer: access control, batch/speed fusion, live streaming and
//! on-demand IQ.
//!
//! Stores hold linear mW only; [`to_dbm`] at this edge is the single place
//! where powers become decibels.

mod access;
mod api;
mod fusion;
mod iq;
mod query;
mod stream;

use serde::{Deserialize, Serialize};

pub use access::{
    authorize_owner, authorize_view, clamp, Auth, Grant, PUBLIC_MIN_F_RES_HZ, PUBLIC_MIN_T_RES_MS,
};
pub use api::Api;
pub use fusion::{fused_view, source_level, FusedView};
pub use iq::{IqRequest, IqRequestInfo, IqStore, DEFAULT_IQ_TTL_MS};
pub use query::{Mode, QuerySpec};
pub use stream::{StreamCell, StreamHub, StreamRecord, Subscription, DEFAULT_SUBSCRIBER_CAPACITY};

use crate::aggregate::{AggFn, AggregateCell, Layer};
use crate::clock::Millis;
use crate::SensorId;

/// `10 log10(mW)`; `None` for zero power.
pub fn to_dbm(mw: f64) -> Option<f64> {
    (mw > 0.0).then(|| 10.0 * mw.log10())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub t_start_ms: Millis,
    pub t_end_ms: Millis,
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub value_dbm: Option<f64>,
    pub count: u64,
    pub layer: Layer,
}

impl From<&AggregateCell> for GridCell {
    fn from(c: &AggregateCell) -> Self {
        Self {
            t_start_ms: c.t_start_ms,
            t_end_ms: c.t_start_ms + c.t_width_ms,
            f_start_hz: c.f_start_hz,
            f_end_hz: c.f_start_hz + c.f_width_hz,
            value_dbm: to_dbm(c.value_mw),
            count: c.count,
            layer: c.layer,
        }
    }
}

/// Aggregated query result with the resolution actually applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedResponse {
    pub sensor_id: SensorId,
    #[serde(rename = "fn")]
    pub func: AggFn,
    pub t0_ms: Millis,
    pub t1_ms: Millis,
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub requested_t_res_ms: Millis,
    pub requested_f_res_hz: u64,
    pub t_res_ms: Millis,
    pub f_res_hz: u64,
    pub clamped: bool,
    pub batch_horizon_ms: Millis,
    pub cells: Vec<GridCell>,
}
