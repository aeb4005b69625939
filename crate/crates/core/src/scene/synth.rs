use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::clock::Millis;
use crate::dsp::{derive_seed, fft_inverse};
use crate::{Error, Result, SensorId};

/// RTL-SDR class front-end bandwidth.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 2.4e6;

/// Complex baseband IQ samples with their capture metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBlock {
    pub sensor_id: SensorId,
    pub center_freq: f64,
    pub sample_rate: f64,
    pub t0: Millis,
    pub samples: Vec<Complex32>,
}

impl SampleBlock {
    pub fn mean_power(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.norm_sqr() as f64)
            .sum::<f64>()
            / self.samples.len() as f64
    }
}

/// Receive chain gain applied on top of the scene's input-referred signal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    /// Net system gain in dB (antenna + front-end - cable losses).
    pub gain_db: f64,
}

impl FrontEnd {
    pub fn apply(&self, mut block: SampleBlock) -> SampleBlock {
        if self.gain_db != 0.0 {
            let amp = 10f64.powf(self.gain_db / 20.0) as f32;
            block.samples.iter_mut().for_each(|s| *s *= amp);
        }
        block
    }
}

/// Generates `n_samples` of baseband IQ for a sensor tuned to `center_freq`.
///
/// The result is complex white Gaussian noise of total power
/// `noise_density * sample_rate`, plus one band-limited component per emitter
/// that is on at `t0` and intersects the tuned window. Each component carries
/// the intersecting fraction of the emitter's power as a random-phase
/// multitone on the block's DFT grid, so its block-level power is exact.
///
/// The output is a pure function of `(scene, sensor_id, center_freq, t0,
/// n_samples, sample_rate)`; noise and each emitter draw from separate seeded
/// streams, so an emitter outside the window leaves the noise bit-identical.
pub fn synthesize_block(
    scene: &Scene,
    sensor_id: &SensorId,
    center_freq: f64,
    sample_rate: f64,
    n_samples: usize,
    t0: Millis,
) -> Result<SampleBlock> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be > 0"));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::invalid("sample_rate must be > 0"));
    }
    if !center_freq.is_finite() {
        return Err(Error::invalid("center frequency must be finite"));
    }
    let key = [
        &scene.rng_seed.to_le_bytes()[..],
        sensor_id.as_str().as_bytes(),
        &center_freq.to_bits().to_le_bytes(),
        &sample_rate.to_bits().to_le_bytes(),
        &t0.to_le_bytes(),
    ];

    let n = n_samples;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let mut any_signal = false;
    let half = sample_rate / 2.0;
    for (idx, e) in scene.emitters.iter().enumerate() {
        if !e.activity.is_on(t0) || e.power_mw <= 0.0 {
            continue;
        }
        let lo = e.lo().max(center_freq - half) - center_freq;
        let hi = e.hi().min(center_freq + half) - center_freq;
        if hi <= lo {
            continue;
        }
        let p_in = e.power_mw * (hi - lo) / e.bandwidth;
        let bins = grid_bins(lo, hi, n, sample_rate);
        let mag = n as f64 * (p_in / bins.len() as f64).sqrt();
        let mut parts = key.to_vec();
        let idx_bytes = (idx as u64).to_le_bytes();
        parts.push(&idx_bytes);
        let mut rng = ChaCha8Rng::from_seed(derive_seed("emitter", &parts));
        for m in bins {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            spectrum[m.rem_euclid(n as i64) as usize] += Complex64::from_polar(mag, phase);
            any_signal = true;
        }
    }
    if any_signal {
        fft_inverse(&mut spectrum);
        let inv_n = 1.0 / n as f64;
        spectrum.iter_mut().for_each(|x| *x *= inv_n);
    }

    let sigma = (scene.noise_density * sample_rate / 2.0).sqrt();
    let mut rng = ChaCha8Rng::from_seed(derive_seed("noise", &key));
    let samples = spectrum
        .iter()
        .map(|s| {
            let i: f64 = StandardNormal.sample(&mut rng);
            let q: f64 = StandardNormal.sample(&mut rng);
            Complex32::new((s.re + sigma * i) as f32, (s.im + sigma * q) as f32)
        })
        .collect();

    Ok(SampleBlock {
        sensor_id: sensor_id.clone(),
        center_freq,
        sample_rate,
        t0,
        samples,
    })
}

/// Signed DFT indices `m` whose frequency `m * fs / n` lies in `[lo, hi)`.
/// A band narrower than the grid spacing maps to its nearest grid point.
fn grid_bins(lo: f64, hi: f64, n: usize, fs: f64) -> Vec<i64> {
    let step = fs / n as f64;
    let min_m = -(n as i64 / 2);
    let max_m = min_m + n as i64 - 1;
    let first = ((lo / step).ceil() as i64).max(min_m);
    let last = (((hi / step).ceil() as i64) - 1).min(max_m);
    if first <= last {
        (first..=last).collect()
    } else {
        let mid = ((lo + hi) / 2.0 / step).round() as i64;
        vec![mid.clamp(min_m, max_m)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Activity, Emitter};

    fn sid() -> SensorId {
        SensorId::new("s-1")
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = Scene::new(1e-15, 1).unwrap();
        assert!(matches!(
            synthesize_block(&s, &sid(), 1e9, 2.4e6, 0, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(synthesize_block(&s, &sid(), 1e9, 0.0, 16, 0).is_err());
        assert!(synthesize_block(&s, &sid(), 1e9, -1.0, 16, 0).is_err());
    }

    #[test]
    fn noise_only_power_matches_density() {
        let d = 1e-12;
        let fs = 2.4e6;
        let s = Scene::new(d, 42).unwrap();
        let b = synthesize_block(&s, &sid(), 500e6, fs, 65_536, 1_000).unwrap();
        let p = b.mean_power();
        assert!(
            (p / (d * fs) - 1.0).abs() < 0.05,
            "power ratio {}",
            p / (d * fs)
        );
    }

    #[test]
    fn deterministic_for_same_query() {
        let s = Scene::new(1e-12, 3)
            .unwrap()
            .with_emitter(Emitter::always_on(500.3e6, 200e3, 1e-6))
            .unwrap();
        let a = synthesize_block(&s, &sid(), 500e6, 2.4e6, 4096, 77).unwrap();
        let b = synthesize_block(&s, &sid(), 500e6, 2.4e6, 4096, 77).unwrap();
        assert_eq!(a, b);
        let c = synthesize_block(&s, &sid(), 500e6, 2.4e6, 4096, 78).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn emitter_outside_window_leaves_noise_identical() {
        let base = Scene::new(1e-12, 5).unwrap();
        let with = base
            .clone()
            .with_emitter(Emitter::always_on(900e6, 1e6, 1.0))
            .unwrap();
        let a = synthesize_block(&base, &sid(), 500e6, 2.4e6, 8192, 0).unwrap();
        let b = synthesize_block(&with, &sid(), 500e6, 2.4e6, 8192, 0).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn off_emitter_contributes_nothing() {
        let mut e = Emitter::always_on(500e6, 1e6, 1.0);
        e.activity = Activity::Periodic {
            period_ms: 100,
            on_ms: 25,
            phase_ms: 0,
        };
        let with = Scene::new(1e-12, 5).unwrap().with_emitter(e).unwrap();
        let base = Scene::new(1e-12, 5).unwrap();
        let off = synthesize_block(&with, &sid(), 500e6, 2.4e6, 1024, 50).unwrap();
        let none = synthesize_block(&base, &sid(), 500e6, 2.4e6, 1024, 50).unwrap();
        assert_eq!(off.samples, none.samples);
        let on = synthesize_block(&with, &sid(), 500e6, 2.4e6, 1024, 10).unwrap();
        assert!(on.mean_power() > 1e3 * none.mean_power());
    }

    #[test]
    fn partial_overlap_carries_intersecting_fraction() {
        // Window [498.8, 501.2) MHz; emitter [500, 502) MHz -> 60% inside.
        let p = 1e-3;
        let s = Scene::new(1e-18, 1)
            .unwrap()
            .with_emitter(Emitter::always_on(501e6, 2e6, p))
            .unwrap();
        let b = synthesize_block(&s, &sid(), 500e6, 2.4e6, 24_000, 0).unwrap();
        assert!((b.mean_power() / (0.6 * p) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn front_end_gain_scales_power() {
        let s = Scene::new(1e-12, 5).unwrap();
        let b = synthesize_block(&s, &sid(), 500e6, 2.4e6, 4096, 0).unwrap();
        let p0 = b.mean_power();
        let g = FrontEnd { gain_db: 20.0 }.apply(b);
        assert!((g.mean_power() / p0 - 100.0).abs() < 1e-3);
    }

    #[test]
    fn narrow_band_maps_to_nearest_bin() {
        assert_eq!(grid_bins(-1.0, 1.0, 16, 16.0), vec![-1, 0]);
        assert_eq!(grid_bins(-0.5, 0.5, 16, 16.0), vec![0]);
        assert_eq!(grid_bins(0.2, 0.4, 16, 16.0), vec![0]);
        assert_eq!(grid_bins(-8.0, 8.0, 16, 16.0).len(), 16);
        assert_eq!(grid_bins(2.0, 4.0, 16, 16.0), vec![2, 3]);
    }
}
