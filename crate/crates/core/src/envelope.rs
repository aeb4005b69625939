//! `MeasurementEnvelope` wire format shared by sensors and the collector.
//!
//! One JSON object per line:
//!
//! ```text
//! {"v":1,"sensor_id":"s-1","campaign_id":"default","seq":7,"type":"psd",
//!  "center_freq_hz":401200000.0,"bin_width_hz":9375.0,"t0_ms":1700000000000,
//!  "dwell_ms":125,"n_avg":16,"gain_meta":{...},"payload":[1.2e-9, ...]}
//! {"v":1,...,"type":"iq","center_freq_hz":...,"sample_rate_hz":2400000.0,
//!  "t0_ms":...,"dwell_ms":...,"codec":"lossless-zip","gain_meta":{...},
//!  "payload":"<base64>"}
//! ```
//!
//! `seq` is a per-sensor monotone counter. Floats are written in shortest
//! round-trip form, so PSD bins survive the wire bit-exactly.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::sensor::{GainMeta, IqCodec, IqMessage, PsdSegment};
use crate::{CampaignId, Error, Result, SensorId};

pub const WIRE_VERSION: u32 = 1;
/// Longest accepted envelope line.
pub const MAX_LINE_BYTES: usize = 64 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub sensor_id: SensorId,
    pub campaign_id: CampaignId,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Body {
    Psd {
        center_freq_hz: f64,
        bin_width_hz: f64,
        t0_ms: Millis,
        dwell_ms: Millis,
        n_avg: u32,
        #[serde(default)]
        gain_meta: GainMeta,
        payload: Vec<f64>,
    },
    Iq {
        center_freq_hz: f64,
        sample_rate_hz: f64,
        t0_ms: Millis,
        #[serde(default)]
        dwell_ms: Millis,
        codec: IqCodec,
        #[serde(default)]
        gain_meta: GainMeta,
        payload: String,
    },
}

impl Envelope {
    pub fn from_segment(seq: u64, seg: &PsdSegment) -> Self {
        Self {
            v: WIRE_VERSION,
            sensor_id: seg.sensor_id.clone(),
            campaign_id: seg.campaign_id.clone(),
            seq,
            body: Body::Psd {
                center_freq_hz: seg.center_freq,
                bin_width_hz: seg.bin_width,
                t0_ms: seg.t0,
                dwell_ms: seg.dwell_ms,
                n_avg: seg.n_avg,
                gain_meta: seg.gain_meta,
                payload: seg.bins.clone(),
            },
        }
    }

    pub fn from_iq(seq: u64, msg: &IqMessage, dwell_ms: Millis, gain_meta: GainMeta) -> Self {
        Self {
            v: WIRE_VERSION,
            sensor_id: msg.sensor_id.clone(),
            campaign_id: msg.campaign_id.clone(),
            seq,
            body: Body::Iq {
                center_freq_hz: msg.center_freq,
                sample_rate_hz: msg.sample_rate,
                t0_ms: msg.t0,
                dwell_ms,
                codec: msg.codec,
                gain_meta,
                payload: B64.encode(&msg.payload),
            },
        }
    }

    pub fn is_psd(&self) -> bool {
        matches!(self.body, Body::Psd { .. })
    }

    pub fn t0_ms(&self) -> Millis {
        match self.body {
            Body::Psd { t0_ms, .. } | Body::Iq { t0_ms, .. } => t0_ms,
        }
    }

    pub fn center_freq_hz(&self) -> f64 {
        match self.body {
            Body::Psd { center_freq_hz, .. } | Body::Iq { center_freq_hz, .. } => center_freq_hz,
        }
    }

    pub fn key(&self) -> (SensorId, u64) {
        (self.sensor_id.clone(), self.seq)
    }

    /// The PSD segment carried by a `psd` envelope.
    pub fn to_segment(&self) -> Option<PsdSegment> {
        match &self.body {
            Body::Psd {
                center_freq_hz,
                bin_width_hz,
                t0_ms,
                dwell_ms,
                n_avg,
                gain_meta,
                payload,
            } => Some(PsdSegment {
                sensor_id: self.sensor_id.clone(),
                campaign_id: self.campaign_id.clone(),
                center_freq: *center_freq_hz,
                bin_width: *bin_width_hz,
                t0: *t0_ms,
                dwell_ms: *dwell_ms,
                bins: payload.clone(),
                n_avg: *n_avg,
                gain_meta: *gain_meta,
            }),
            Body::Iq { .. } => None,
        }
    }

    /// The IQ message carried by an `iq` envelope.
    pub fn to_iq(&self) -> Result<IqMessage> {
        match &self.body {
            Body::Iq {
                center_freq_hz,
                sample_rate_hz,
                t0_ms,
                codec,
                payload,
                ..
            } => Ok(IqMessage {
                sensor_id: self.sensor_id.clone(),
                campaign_id: self.campaign_id.clone(),
                center_freq: *center_freq_hz,
                sample_rate: *sample_rate_hz,
                t0: *t0_ms,
                codec: *codec,
                payload: B64.decode(payload).map_err(Error::parse)?,
            }),
            Body::Psd { .. } => Err(Error::invalid("not an IQ envelope")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v != WIRE_VERSION {
            return Err(Error::invalid(format!(
                "unsupported envelope version {}",
                self.v
            )));
        }
        if self.sensor_id.as_str().is_empty() {
            return Err(Error::invalid("empty sensor_id"));
        }
        match &self.body {
            Body::Psd { .. } => self.to_segment().expect("psd body").validate(),
            Body::Iq {
                center_freq_hz,
                sample_rate_hz,
                dwell_ms,
                payload,
                ..
            } => {
                if !center_freq_hz.is_finite()
                    || !(sample_rate_hz.is_finite() && *sample_rate_hz > 0.0)
                {
                    return Err(Error::invalid(
                        "iq envelope needs finite tuning and sample_rate > 0",
                    ));
                }
                if *dwell_ms < 0 {
                    return Err(Error::invalid("dwell_ms must be >= 0"));
                }
                B64.decode(payload).map_err(Error::parse)?;
                Ok(())
            }
        }
    }

    /// Parses and validates one wire line (a trailing newline is allowed).
    pub fn parse_line(line: &[u8]) -> Result<Self> {
        if line.len() > MAX_LINE_BYTES {
            return Err(Error::parse("envelope line too long"));
        }
        let env: Envelope = serde_json::from_slice(line).map_err(Error::parse)?;
        env.validate()?;
        Ok(env)
    }

    /// Serializes to one wire line without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment() -> PsdSegment {
        PsdSegment {
            sensor_id: SensorId::new("s-1"),
            campaign_id: CampaignId::new("c-1"),
            center_freq: 401.2e6,
            bin_width: 9375.0,
            t0: 1_700_000_000_123,
            dwell_ms: 125,
            bins: (0..256)
                .map(|k| 1e-9 * (1.0 + (k as f64).sin().abs()) / 3.0)
                .collect(),
            n_avg: 16,
            gain_meta: GainMeta {
                antenna_gain_db: 2.0,
                frontend_gain_db: 30.0,
                cable_loss_db: 1.5,
            },
        }
    }

    #[test]
    fn psd_roundtrip_is_bit_exact() {
        let seg = segment();
        let line = Envelope::from_segment(9, &seg).to_line();
        assert!(line.contains("\"type\":\"psd\""));
        let back = Envelope::parse_line(line.as_bytes()).unwrap();
        assert_eq!(back.seq, 9);
        let s2 = back.to_segment().unwrap();
        assert!(s2
            .bins
            .iter()
            .zip(&seg.bins)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(s2, seg);
    }

    #[test]
    fn iq_roundtrip() {
        let msg = IqMessage {
            sensor_id: SensorId::new("s-1"),
            campaign_id: CampaignId::new("iq-1"),
            center_freq: 435e6,
            sample_rate: 2.4e6,
            t0: 10,
            codec: IqCodec::None,
            payload: vec![1, 2, 3, 4, 5, 6, 7, 8],
        };
        let env = Envelope::from_iq(3, &msg, 50, GainMeta::default());
        let back = Envelope::parse_line(env.to_line().as_bytes()).unwrap();
        assert_eq!(back.to_iq().unwrap(), msg);
        assert!(back.to_segment().is_none());
    }

    #[test]
    fn rejects_malformed() {
        let mut env = Envelope::from_segment(1, &segment());
        env.v = 2;
        assert!(Envelope::parse_line(env.to_line().as_bytes()).is_err());
        let mut seg = segment();
        seg.bins[3] = -1.0;
        assert!(
            Envelope::parse_line(Envelope::from_segment(1, &seg).to_line().as_bytes()).is_err()
        );
        seg.bins.truncate(100);
        assert!(
            Envelope::parse_line(Envelope::from_segment(1, &seg).to_line().as_bytes()).is_err()
        );
        assert!(matches!(
            Envelope::parse_line(b"{\"v\":1"),
            Err(Error::Parse(_))
        ));
        assert!(Envelope::parse_line(b"").is_err());
        assert!(Envelope::parse_line(
            b"{\"v\":1,\"sensor_id\":\"a\",\"campaign_id\":\"c\",\"seq\":1,\"type\":\"fft\"}"
        )
        .is_err());
    }
}
