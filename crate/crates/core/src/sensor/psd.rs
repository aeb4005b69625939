//! PSD pipeline: windowed FFT frames, squared magnitudes averaged over
//! contiguous non-overlapping frames (Bartlett averaging).

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::dsp::fft_forward;
use crate::scene::SampleBlock;
use crate::{CampaignId, Error, Result, SensorId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    /// Window coefficients scaled so that `sum(w^2) == n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => {
                let raw: Vec<f64> = (0..n)
                    .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
                    .collect();
                let energy: f64 = raw.iter().map(|w| w * w).sum();
                let scale = (n as f64 / energy).sqrt();
                raw.into_iter().map(|w| w * scale).collect()
            }
        }
    }
}

/// RF chain metadata reported alongside every segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GainMeta {
    pub antenna_gain_db: f64,
    pub frontend_gain_db: f64,
    pub cable_loss_db: f64,
}

impl GainMeta {
    /// Antenna gain plus front-end gain minus cable losses.
    pub fn system_gain_db(&self) -> f64 {
        self.antenna_gain_db + self.frontend_gain_db - self.cable_loss_db
    }
}

/// Averaged squared-magnitude spectrum of one dwell.
///
/// `bins` are in ascending frequency order: bin `k` is centered at
/// `center_freq - sample_rate/2 + k * bin_width`, so the DC bin sits at
/// index `fft_size / 2`. Values follow the pipeline's normalization
/// `(1 / (n_avg * fft_size)) * sum_m |X_m[k]|^2`; [`PsdSegment::bin_power_mw`]
/// converts a bin to the linear power it carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdSegment {
    pub sensor_id: SensorId,
    pub campaign_id: CampaignId,
    pub center_freq: f64,
    pub bin_width: f64,
    pub t0: Millis,
    pub dwell_ms: Millis,
    pub bins: Vec<f64>,
    pub n_avg: u32,
    pub gain_meta: GainMeta,
}

impl PsdSegment {
    pub fn fft_size(&self) -> usize {
        self.bins.len()
    }

    pub fn sample_rate(&self) -> f64 {
        self.bin_width * self.bins.len() as f64
    }

    pub fn window_lo(&self) -> f64 {
        self.center_freq - self.sample_rate() / 2.0
    }

    pub fn window_hi(&self) -> f64 {
        self.center_freq + self.sample_rate() / 2.0
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        self.window_lo() + k as f64 * self.bin_width
    }

    /// Linear power (mW) carried by bin `k`.
    pub fn bin_power_mw(&self, k: usize) -> f64 {
        self.bins[k] / self.bins.len() as f64
    }

    /// Sum of all bin powers, mW.
    pub fn total_power_mw(&self) -> f64 {
        self.bins.iter().sum::<f64>() / self.bins.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bins.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "bins length {n} is not a power of two"
            )));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::invalid("bin_width must be > 0"));
        }
        if !self.center_freq.is_finite() {
            return Err(Error::invalid("center frequency must be finite"));
        }
        if self.n_avg < 1 {
            return Err(Error::invalid("n_avg must be >= 1"));
        }
        if self.dwell_ms < 0 {
            return Err(Error::invalid("dwell_ms must be >= 0"));
        }
        if self.bins.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid("bins must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Runs the PSD pipeline over the first `fft_size * n_avg` samples of `block`.
///
/// The returned segment carries an empty campaign id, default gain metadata,
/// and a dwell equal to the captured duration; the sensor fills those in.
pub fn psd_pipeline(
    block: &SampleBlock,
    fft_size: usize,
    n_avg: u32,
    window: Window,
) -> Result<PsdSegment> {
    if fft_size == 0 || !fft_size.is_power_of_two() {
        return Err(Error::invalid(format!(
            "fft_size {fft_size} is not a power of two"
        )));
    }
    if n_avg == 0 {
        return Err(Error::invalid("n_avg must be >= 1"));
    }
    let needed = fft_size * n_avg as usize;
    if block.samples.len() < needed {
        return Err(Error::invalid(format!(
            "block has {} samples, need {needed}",
            block.samples.len()
        )));
    }
    let w = window.coefficients(fft_size);
    let mut acc = vec![0.0f64; fft_size];
    let mut frame = vec![Complex64::new(0.0, 0.0); fft_size];
    for chunk in block.samples[..needed].chunks_exact(fft_size) {
        for ((dst, s), wk) in frame.iter_mut().zip(chunk).zip(&w) {
            *dst = Complex64::new(s.re as f64 * wk, s.im as f64 * wk);
        }
        fft_forward(&mut frame);
        for (a, x) in acc.iter_mut().zip(&frame) {
            *a += x.norm_sqr();
        }
    }
    let norm = 1.0 / (n_avg as f64 * fft_size as f64);
    // FFT-shift: ascending frequency, bin 0 at the lower window edge.
    let half = fft_size / 2;
    let bins = (0..fft_size)
        .map(|k| acc[(k + half) % fft_size] * norm)
        .collect();
    let captured_ms = (needed as f64 / block.sample_rate * 1000.0).round() as Millis;
    Ok(PsdSegment {
        sensor_id: block.sensor_id.clone(),
        campaign_id: CampaignId::default_campaign(),
        center_freq: block.center_freq,
        bin_width: block.sample_rate / fft_size as f64,
        t0: block.t0,
        dwell_ms: captured_ms,
        bins,
        n_avg,
        gain_meta: GainMeta::default(),
    })
}
