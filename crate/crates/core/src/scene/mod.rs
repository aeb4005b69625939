//! Deterministic synthetic RF environment.
//!
//! A [`Scene`] is a set of flat-spectrum rectangular [`Emitter`]s over complex
//! white Gaussian noise. It stands in for the radio front-end: sensors ask it
//! for baseband IQ ([`synthesize_block`]) and tests ask it for the analytic
//! power spectral density ([`Scene::expected_psd`]).

mod file;
mod synth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::dsp::derive_seed;
use crate::{Error, Result};

pub use file::SceneFile;
pub use synth::{synthesize_block, FrontEnd, SampleBlock, DEFAULT_SAMPLE_RATE_HZ};

/// Length of the independently seeded chunks of a bursty activity process.
const BURST_CHUNK_MS: Millis = 60_000;

/// When an emitter transmits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activity {
    AlwaysOn,
    /// On during `[phase + k*period, phase + k*period + on)`.
    Periodic {
        period_ms: Millis,
        on_ms: Millis,
        #[serde(default)]
        phase_ms: Millis,
    },
    /// Alternating exponential on/off holding times, discretized to 1 ms.
    Bursty {
        mean_on_ms: f64,
        mean_off_ms: f64,
        seed: u64,
    },
}

impl Activity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Activity::AlwaysOn => Ok(()),
            Activity::Periodic {
                period_ms, on_ms, ..
            } => {
                if period_ms <= 0 || on_ms <= 0 {
                    return Err(Error::invalid(
                        "periodic activity needs period_ms > 0 and on_ms > 0",
                    ));
                }
                Ok(())
            }
            Activity::Bursty {
                mean_on_ms,
                mean_off_ms,
                ..
            } => {
                if !(mean_on_ms > 0.0 && mean_off_ms > 0.0)
                    || !mean_on_ms.is_finite()
                    || !mean_off_ms.is_finite()
                {
                    return Err(Error::invalid(
                        "bursty activity needs positive finite means",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Long-run fraction of time the emitter is on.
    pub fn duty_cycle(&self) -> f64 {
        match *self {
            Activity::AlwaysOn => 1.0,
            Activity::Periodic {
                period_ms, on_ms, ..
            } => (on_ms as f64 / period_ms as f64).min(1.0),
            Activity::Bursty {
                mean_on_ms,
                mean_off_ms,
                ..
            } => mean_on_ms / (mean_on_ms + mean_off_ms),
        }
    }

    pub fn is_on(&self, t: Millis) -> bool {
        match *self {
            Activity::AlwaysOn => true,
            Activity::Periodic {
                period_ms,
                on_ms,
                phase_ms,
            } => (t - phase_ms).rem_euclid(period_ms) < on_ms,
            Activity::Bursty {
                mean_on_ms,
                mean_off_ms,
                seed,
            } => bursty_state(mean_on_ms, mean_off_ms, seed, t),
        }
    }
}

/// Each 60 s chunk restarts the alternating renewal process from its
/// stationary distribution, seeded by the chunk index, so the state at any
/// instant is computable without replaying history.
fn bursty_state(mean_on: f64, mean_off: f64, seed: u64, t: Millis) -> bool {
    let chunk = t.div_euclid(BURST_CHUNK_MS);
    let mut rng = ChaCha8Rng::from_seed(derive_seed(
        "bursty",
        &[&seed.to_le_bytes(), &chunk.to_le_bytes()],
    ));
    let on_dist = Exp::new(1.0 / mean_on).expect("validated mean");
    let off_dist = Exp::new(1.0 / mean_off).expect("validated mean");
    let mut on = rng.random::<f64>() < mean_on / (mean_on + mean_off);
    let mut pos = chunk * BURST_CHUNK_MS;
    loop {
        let dist = if on { &on_dist } else { &off_dist };
        let hold = (dist.sample(&mut rng).ceil() as Millis).max(1);
        if t < pos + hold {
            return on;
        }
        pos += hold;
        on = !on;
    }
}

/// A transmitter with a flat rectangular spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub center_freq: f64,
    pub bandwidth: f64,
    /// Total in-band power, linear mW.
    pub power_mw: f64,
    pub activity: Activity,
}

impl Emitter {
    pub fn always_on(center_freq: f64, bandwidth: f64, power_mw: f64) -> Self {
        Self {
            center_freq,
            bandwidth,
            power_mw,
            activity: Activity::AlwaysOn,
        }
    }

    pub fn lo(&self) -> f64 {
        self.center_freq - self.bandwidth / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.center_freq + self.bandwidth / 2.0
    }

    /// In-band power spectral density, mW/Hz.
    pub fn density(&self) -> f64 {
        self.power_mw / self.bandwidth
    }

    pub fn covers(&self, freq: f64) -> bool {
        freq >= self.lo() && freq < self.hi()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("emitter bandwidth must be > 0"));
        }
        if !(self.power_mw >= 0.0 && self.power_mw.is_finite()) {
            return Err(Error::invalid("emitter power must be >= 0"));
        }
        if !self.center_freq.is_finite() {
            return Err(Error::invalid("emitter center frequency must be finite"));
        }
        self.activity.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub emitters: Vec<Emitter>,
    /// Complex noise density, mW/Hz.
    pub noise_density: f64,
    pub rng_seed: u64,
}

impl Scene {
    pub fn new(noise_density: f64, rng_seed: u64) -> Result<Self> {
        let s = Self {
            emitters: Vec::new(),
            noise_density,
            rng_seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_emitter(mut self, e: Emitter) -> Result<Self> {
        e.validate()?;
        self.emitters.push(e);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_density > 0.0 && self.noise_density.is_finite()) {
            return Err(Error::invalid("noise density must be > 0"));
        }
        self.emitters.iter().try_for_each(Emitter::validate)
    }

    /// Analytic PSD at `freq` and time `t`, mW/Hz: the noise density plus
    /// `power / bandwidth` of every emitter that is on and covers `freq`.
    pub fn expected_psd(&self, freq: f64, t: Millis) -> f64 {
        self.noise_density
            + self
                .emitters
                .iter()
                .filter(|e| e.covers(freq) && e.activity.is_on(t))
                .map(Emitter::density)
                .sum::<f64>()
    }
}
