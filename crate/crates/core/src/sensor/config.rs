use std::path::Path;

use serde::{Deserialize, Serialize};

use super::iq::IqCodec;
use super::psd::Window;
use super::scheduler::{HopStrategy, ScanState};
use crate::clock::Millis;
use crate::scene::DEFAULT_SAMPLE_RATE_HZ;
use crate::{Error, Result, MAX_FREQ_HZ, MIN_FREQ_HZ};

/// Bits per PSD bin on the compact sensor uplink (`f32`).
pub const BITS_PER_BIN: u32 = 32;
/// Per-segment header on the compact uplink: ids, sequence, timing, tuning
/// and gain metadata.
pub const HEADER_BYTES: u32 = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    #[default]
    Psd,
    Iq,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Result<Self> {
        let b = Self { lo_hz, hi_hz };
        b.validate()?;
        Ok(b)
    }

    pub fn full_range() -> Self {
        Self {
            lo_hz: MIN_FREQ_HZ,
            hi_hz: MAX_FREQ_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo_hz >= MIN_FREQ_HZ && self.hi_hz <= MAX_FREQ_HZ && self.lo_hz < self.hi_hz) {
            return Err(Error::invalid(format!(
                "band [{}, {}] Hz must satisfy 20 MHz <= lo < hi <= 6 GHz",
                self.lo_hz, self.hi_hz
            )));
        }
        Ok(())
    }
}

/// Everything a sensor needs to know to scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub pipeline: Pipeline,
    pub fft_size: usize,
    pub n_avg: u32,
    pub window: Window,
    pub sample_rate: f64,
    pub band: Band,
    pub dwell_ms: Millis,
    pub strategy: HopStrategy,
    pub iq_codec: IqCodec,
}

impl Default for SensorConfig {
    /// Full-range sequential PSD sweep.
    fn default() -> Self {
        Self {
            pipeline: Pipeline::Psd,
            fft_size: 256,
            n_avg: 16,
            window: Window::Hann,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
            band: Band::full_range(),
            dwell_ms: 125,
            strategy: HopStrategy::Sequential,
            iq_codec: IqCodec::LosslessZip,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        if !(self.fft_size.is_power_of_two() && (256..=65_536).contains(&self.fft_size)) {
            return Err(Error::invalid(
                "fft_size must be a power of two in 256..=65536",
            ));
        }
        if self.n_avg == 0 {
            return Err(Error::invalid("n_avg must be >= 1"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::invalid("sample_rate must be > 0"));
        }
        if self.dwell_ms <= 0 {
            return Err(Error::invalid("dwell_ms must be > 0"));
        }
        Ok(())
    }

    /// Samples captured per dwell.
    pub fn samples_per_dwell(&self) -> usize {
        self.fft_size * self.n_avg as usize
    }

    pub fn scan_state(&self) -> Result<ScanState> {
        ScanState::new(
            (self.band.lo_hz, self.band.hi_hz),
            self.sample_rate,
            self.strategy,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(Error::parse)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Uplink rate of the PSD pipeline in bits per second:
/// `(fft_size * 32 + header_bits) / dwell_seconds`.
pub fn estimate_output_rate(config: &SensorConfig) -> Result<f64> {
    if config.pipeline != Pipeline::Psd {
        return Err(Error::invalid(
            "output rate estimate applies to the PSD pipeline",
        ));
    }
    if config.dwell_ms <= 0 {
        return Err(Error::invalid("dwell_ms must be > 0"));
    }
    let bits = config.fft_size as f64 * BITS_PER_BIN as f64 + HEADER_BYTES as f64 * 8.0;
    Ok(bits / (config.dwell_ms as f64 / 1000.0))
}

/// Bytes stored for `sensors` sensors at `rate_bps` over `days` days.
pub fn storage_bytes(rate_bps: f64, sensors: u32, days: f64) -> f64 {
    rate_bps * sensors as f64 * days * 86_400.0 / 8.0
}
