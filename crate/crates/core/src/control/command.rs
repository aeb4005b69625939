//! Scan commands, acknowledgements and presence messages.
//!
//! Payloads are single-line JSON, like envelopes:
//!
//! ```text
//! {"command_id":"c-3/s-1/1","campaign_id":"c-3","verb":"set-band","args":{"lo_hz":4e8,"hi_hz":8e8}}
//! {"command_id":"c-3/s-1/5","campaign_id":"c-3","verb":"stop"}
//! {"command_id":"c-3/s-1/1","sensor_id":"s-1","status":"ok","config":{...}}
//! ```

use serde::{Deserialize, Serialize};

use super::registry::SensorStatus;
use crate::clock::Millis;
use crate::sensor::{Band, HopStrategy, IqCodec, Pipeline, SensorConfig};
use crate::{CampaignId, Error, Result, SensorId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", content = "args", rename_all = "kebab-case")]
pub enum Verb {
    SetBand {
        lo_hz: f64,
        hi_hz: f64,
    },
    SetStrategy {
        strategy: HopStrategy,
    },
    SetSampleRate {
        sample_rate_hz: f64,
    },
    SetPipeline {
        pipeline: Pipeline,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        codec: Option<IqCodec>,
    },
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub command_id: String,
    pub campaign_id: CampaignId,
    #[serde(flatten)]
    pub verb: Verb,
}

impl Command {
    pub fn new(command_id: impl Into<String>, campaign_id: CampaignId, verb: Verb) -> Self {
        Self {
            command_id: command_id.into(),
            campaign_id,
            verb,
        }
    }

    pub fn parse(payload: &str) -> Result<Self> {
        serde_json::from_str(payload).map_err(Error::parse)
    }

    pub fn to_payload(&self) -> String {
        serde_json::to_string(self).expect("command serialization cannot fail")
    }
}

/// Returns the config after `cmd`; errors leave the caller's config as is.
pub fn apply_command(config: &SensorConfig, cmd: &Command) -> Result<SensorConfig> {
    let mut next = config.clone();
    match &cmd.verb {
        Verb::SetBand { lo_hz, hi_hz } => next.band = Band::new(*lo_hz, *hi_hz)?,
        Verb::SetStrategy { strategy } => next.strategy = *strategy,
        Verb::SetSampleRate { sample_rate_hz } => next.sample_rate = *sample_rate_hz,
        Verb::SetPipeline { pipeline, codec } => {
            next.pipeline = *pipeline;
            if let Some(c) = codec {
                next.iq_codec = *c;
            }
        }
        Verb::Stop => next = SensorConfig::default(),
    }
    next.validate()?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Ok,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub command_id: String,
    pub sensor_id: SensorId,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Effective config after the command.
    pub config: SensorConfig,
}

impl Ack {
    pub fn parse(payload: &str) -> Result<Self> {
        serde_json::from_str(payload).map_err(Error::parse)
    }

    pub fn to_payload(&self) -> String {
        serde_json::to_string(self).expect("ack serialization cannot fail")
    }
}

/// Presence message on `control/<sensor_id>/status`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusMessage {
    pub sensor_id: SensorId,
    pub status: SensorStatus,
    pub t_ms: Millis,
}

impl StatusMessage {
    pub fn parse(payload: &str) -> Result<Self> {
        serde_json::from_str(payload).map_err(Error::parse)
    }

    pub fn to_payload(&self) -> String {
        serde_json::to_string(self).expect("status serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(verb: Verb) -> Command {
        Command::new("x", CampaignId::new("c-1"), verb)
    }

    #[test]
    fn wire_shape() {
        let c = cmd(Verb::SetBand {
            lo_hz: 4e8,
            hi_hz: 8e8,
        });
        let text = c.to_payload();
        assert!(text.contains("\"verb\":\"set-band\""), "{text}");
        assert!(text.contains("\"args\":{"), "{text}");
        assert_eq!(Command::parse(&text).unwrap(), c);
        let stop = Command::parse(r#"{"command_id":"y","campaign_id":"c","verb":"stop"}"#).unwrap();
        assert_eq!(stop.verb, Verb::Stop);
        assert!(Command::parse(r#"{"command_id":"y","campaign_id":"c","verb":"reboot"}"#).is_err());
        assert!(Command::parse(
            r#"{"command_id":"y","campaign_id":"c","verb":"set-band","args":{}}"#
        )
        .is_err());
    }

    #[test]
    fn set_band_rebuilds_hops() {
        let c = apply_command(
            &SensorConfig::default(),
            &cmd(Verb::SetBand {
                lo_hz: 400e6,
                hi_hz: 800e6,
            }),
        )
        .unwrap();
        assert_eq!(c.scan_state().unwrap().hop_list.len(), 167);
    }

    #[test]
    fn out_of_range_band_is_rejected() {
        let base = SensorConfig::default();
        assert!(apply_command(
            &base,
            &cmd(Verb::SetBand {
                lo_hz: 1e6,
                hi_hz: 2e6
            })
        )
        .is_err());
        assert!(apply_command(
            &base,
            &cmd(Verb::SetSampleRate {
                sample_rate_hz: -1.0
            })
        )
        .is_err());
    }

    #[test]
    fn stop_resets_and_commands_are_idempotent() {
        let verbs = [
            Verb::SetBand {
                lo_hz: 400e6,
                hi_hz: 800e6,
            },
            Verb::SetStrategy {
                strategy: HopStrategy::BurstyWeighted,
            },
            Verb::SetSampleRate {
                sample_rate_hz: 2.0e6,
            },
            Verb::SetPipeline {
                pipeline: Pipeline::Iq,
                codec: Some(IqCodec::Quantized8),
            },
        ];
        let mut c = SensorConfig::default();
        for v in verbs {
            let once = apply_command(&c, &cmd(v.clone())).unwrap();
            let twice = apply_command(&once, &cmd(v)).unwrap();
            assert_eq!(once, twice);
            c = once;
        }
        assert_eq!(c.pipeline, Pipeline::Iq);
        assert_eq!(
            apply_command(&c, &cmd(Verb::Stop)).unwrap(),
            SensorConfig::default()
        );
    }

    #[test]
    fn ack_roundtrip() {
        let a = Ack {
            command_id: "x".into(),
            sensor_id: SensorId::new("s-1"),
            status: AckStatus::Rejected,
            reason: Some("band".into()),
            config: SensorConfig::default(),
        };
        assert_eq!(Ack::parse(&a.to_payload()).unwrap(), a);
    }
}
