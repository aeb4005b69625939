//! Control plane: sensor registry, campaign manager and the
//! publish-subscribe command contract.
//!
//! Topics: `control/<sensor_id>/cmd` (manager to sensor),
//! `control/<sensor_id>/ack` (sensor to manager) and
//! `control/<sensor_id>/status` (sensor presence).

mod broker;
mod campaign;
mod command;
mod geo;
mod registry;

pub use broker::{serve_broker_tcp, topic_matches, Broker, BrokerMessage, RemoteBroker, Transport};
pub use campaign::{
    Campaign, CampaignManager, CampaignSpec, CampaignState, FanoutReport, DEFAULT_ACK_TIMEOUT,
};
pub use command::{apply_command, Ack, AckStatus, Command, StatusMessage, Verb};
pub use geo::{haversine_km, obfuscate_location, LatLon, EARTH_RADIUS_KM};
pub use registry::{
    PublicSensor, Registration, Registry, SensorRecord, SensorStatus, Visibility,
    DEFAULT_OBFUSCATION_RADIUS_KM,
};

use crate::SensorId;

pub fn cmd_topic(sensor: &SensorId) -> String {
    format!("control/{sensor}/cmd")
}

pub fn ack_topic(sensor: &SensorId) -> String {
    format!("control/{sensor}/ack")
}

pub fn status_topic(sensor: &SensorId) -> String {
    format!("control/{sensor}/status")
}
