//! IQ pipeline: raw samples, optionally compressed, for on-demand capture.

use std::io::{Read, Write};
use std::str::FromStr;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use rustfft::num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::scene::SampleBlock;
use crate::{CampaignId, Error, Result, SensorId};

/// Payload encoding of an [`IqMessage`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IqCodec {
    /// Little-endian `f32` I then `f32` Q per sample.
    None,
    /// Deflate over the `None` layout. Lossless.
    #[default]
    LosslessZip,
    /// `f32` scale followed by `i8` I/Q pairs. Lossy; a quarter of the raw rate.
    Quantized8,
}

impl IqCodec {
    pub fn as_str(self) -> &'static str {
        match self {
            IqCodec::None => "none",
            IqCodec::LosslessZip => "lossless-zip",
            IqCodec::Quantized8 => "quantized8",
        }
    }

    /// Fixed payload bits per complex sample, where the codec has one.
    pub fn bits_per_sample(self) -> Option<u32> {
        match self {
            IqCodec::None => Some(64),
            IqCodec::Quantized8 => Some(16),
            IqCodec::LosslessZip => None,
        }
    }
}

impl FromStr for IqCodec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(IqCodec::None),
            "lossless-zip" => Ok(IqCodec::LosslessZip),
            "quantized8" => Ok(IqCodec::Quantized8),
            other => Err(Error::invalid(format!("unknown IQ codec {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqMessage {
    pub sensor_id: SensorId,
    pub campaign_id: CampaignId,
    pub center_freq: f64,
    pub sample_rate: f64,
    pub t0: Millis,
    pub codec: IqCodec,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

impl IqMessage {
    pub fn decode(&self) -> Result<Vec<Complex32>> {
        decode_payload(self.codec, &self.payload)
    }
}

/// Uncompressed IQ rate in bits per second for a codec with a fixed width.
pub fn raw_iq_rate_bps(sample_rate: f64, codec: IqCodec) -> Option<f64> {
    codec.bits_per_sample().map(|b| sample_rate * b as f64)
}

pub fn iq_pipeline(
    block: &SampleBlock,
    codec: IqCodec,
    campaign_id: CampaignId,
) -> Result<IqMessage> {
    Ok(IqMessage {
        sensor_id: block.sensor_id.clone(),
        campaign_id,
        center_freq: block.center_freq,
        sample_rate: block.sample_rate,
        t0: block.t0,
        codec,
        payload: encode_payload(codec, &block.samples)?,
    })
}

fn raw_bytes(samples: &[Complex32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

fn from_raw_bytes(bytes: &[u8]) -> Result<Vec<Complex32>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::parse(format!(
            "raw IQ payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                f32::from_le_bytes(c[4..].try_into().expect("4 bytes")),
            )
        })
        .collect())
}

pub fn encode_payload(codec: IqCodec, samples: &[Complex32]) -> Result<Vec<u8>> {
    match codec {
        IqCodec::None => Ok(raw_bytes(samples)),
        IqCodec::LosslessZip => {
            let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&raw_bytes(samples))?;
            Ok(enc.finish()?)
        }
        IqCodec::Quantized8 => {
            let peak = samples
                .iter()
                .map(|s| s.re.abs().max(s.im.abs()))
                .filter(|v| v.is_finite())
                .fold(0.0f32, f32::max);
            let scale = if peak > 0.0 { peak / 127.0 } else { 1.0 };
            let mut out = Vec::with_capacity(4 + samples.len() * 2);
            out.extend_from_slice(&scale.to_le_bytes());
            for s in samples {
                out.push((s.re / scale).round().clamp(-127.0, 127.0) as i8 as u8);
                out.push((s.im / scale).round().clamp(-127.0, 127.0) as i8 as u8);
            }
            Ok(out)
        }
    }
}

/// Upper bound on a decoded IQ payload; guards inflation of hostile input.
const MAX_DECODED_BYTES: u64 = 1 << 30;

pub fn decode_payload(codec: IqCodec, payload: &[u8]) -> Result<Vec<Complex32>> {
    match codec {
        IqCodec::None => from_raw_bytes(payload),
        IqCodec::LosslessZip => {
            let mut raw = Vec::new();
            DeflateDecoder::new(payload)
                .take(MAX_DECODED_BYTES)
                .read_to_end(&mut raw)
                .map_err(Error::parse)?;
            from_raw_bytes(&raw)
        }
        IqCodec::Quantized8 => {
            if payload.len() < 4 || !(payload.len() - 4).is_multiple_of(2) {
                return Err(Error::parse("quantized IQ payload has bad length"));
            }
            let scale = f32::from_le_bytes(payload[..4].try_into().expect("4 bytes"));
            Ok(payload[4..]
                .chunks_exact(2)
                .map(|c| Complex32::new(c[0] as i8 as f32 * scale, c[1] as i8 as f32 * scale))
                .collect())
        }
    }
}
