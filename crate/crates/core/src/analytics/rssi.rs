use serde::{Deserialize, Serialize};

use crate::sensor::{GainMeta, PsdSegment};
use crate::serving::to_dbm;
use crate::{Error, Result};

/// RF chain gains used to refer measured power back to the antenna port.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub antenna_gain_db: f64,
    pub frontend_gain_db: f64,
    pub cable_loss_db: f64,
}

impl CalibrationProfile {
    pub fn system_gain_db(&self) -> f64 {
        self.antenna_gain_db + self.frontend_gain_db - self.cable_loss_db
    }
}

impl From<GainMeta> for CalibrationProfile {
    fn from(g: GainMeta) -> Self {
        Self {
            antenna_gain_db: g.antenna_gain_db,
            frontend_gain_db: g.frontend_gain_db,
            cable_loss_db: g.cable_loss_db,
        }
    }
}

/// Power of the bins with centers in `[lo, hi)`, in dBm, minus the system
/// gain.
///
/// Returns negative infinity when the band carries no power.
pub fn calibrated_rssi(
    segment: &PsdSegment,
    band: (f64, f64),
    profile: &CalibrationProfile,
) -> Result<f64> {
    let (lo, hi) = band;
    if !(lo < hi) || lo < segment.window_lo() || hi > segment.window_hi() {
        return Err(Error::invalid(format!(
            "band [{lo}, {hi}) Hz is not inside the segment window [{}, {}) Hz",
            segment.window_lo(),
            segment.window_hi()
        )));
    }
    let mw: f64 = (0..segment.fft_size())
        .filter(|&k| {
            let f = segment.bin_freq(k);
            f >= lo && f < hi
        })
        .map(|k| segment.bin_power_mw(k))
        .sum();
    Ok(to_dbm(mw).map_or(f64::NEG_INFINITY, |dbm| dbm - profile.system_gain_db()))
}
