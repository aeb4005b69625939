//! Human-readable scene description (TOML).
//!
//! ```toml
//! noise_density_mw_per_hz = 1e-17
//! rng_seed = 7
//! frontend_gain_db = 0.0        # optional
//!
//! [[emitter]]
//! center_freq_hz = 600e6
//! bandwidth_hz = 8e6
//! power_dbm = -50.0             # or power_mw
//! activity = { kind = "always-on" }
//!
//! [[emitter]]
//! center_freq_hz = 435e6
//! bandwidth_hz = 125e3
//! power_mw = 1e-8
//! activity = { kind = "periodic", period_ms = 3000, on_ms = 200 }
//! # bursty: { kind = "bursty", mean_on_ms = 40, mean_off_ms = 160, seed = 1 }
//! ```

use std::path::Path;

use serde::Deserialize;

use super::{Activity, Emitter, FrontEnd, Scene};
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    noise_density_mw_per_hz: f64,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default)]
    frontend_gain_db: f64,
    #[serde(default)]
    emitter: Vec<RawEmitter>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmitter {
    center_freq_hz: f64,
    bandwidth_hz: f64,
    power_mw: Option<f64>,
    power_dbm: Option<f64>,
    #[serde(default = "always_on")]
    activity: Activity,
}

fn always_on() -> Activity {
    Activity::AlwaysOn
}

/// A parsed scene file: the scene plus the front-end model to apply.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFile {
    pub scene: Scene,
    pub frontend: FrontEnd,
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawScene = toml::from_str(text).map_err(Error::parse)?;
        if !raw.frontend_gain_db.is_finite() {
            return Err(Error::invalid("frontend_gain_db must be finite"));
        }
        let mut scene = Scene::new(raw.noise_density_mw_per_hz, raw.rng_seed)?;
        for e in raw.emitter {
            let power_mw = match (e.power_mw, e.power_dbm) {
                (Some(mw), None) => mw,
                (None, Some(dbm)) => 10f64.powf(dbm / 10.0),
                _ => {
                    return Err(Error::invalid(
                        "emitter needs exactly one of power_mw or power_dbm",
                    ))
                }
            };
            scene = scene.with_emitter(Emitter {
                center_freq: e.center_freq_hz,
                bandwidth: e.bandwidth_hz,
                power_mw,
                activity: e.activity,
            })?;
        }
        Ok(Self {
            scene,
            frontend: FrontEnd {
                gain_db: raw.frontend_gain_db,
            },
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
