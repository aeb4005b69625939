//! Periodic packet transmitter observed by a hopping sensor.

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::sensor::ScanState;
use crate::{Error, Result};

/// Packets of `airtime_ms` at `freq_hz`, one every `period_ms`, the first at
/// `phase_ms`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketTrain {
    pub freq_hz: f64,
    pub period_ms: Millis,
    pub airtime_ms: Millis,
    pub phase_ms: Millis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraReplay {
    pub packets: u64,
    pub captured: u64,
    /// Start times of the captured packets.
    pub captured_at_ms: Vec<Millis>,
    pub dwell_ms: Millis,
    pub sweep_ms: Millis,
}

impl LoraReplay {
    pub fn fraction(&self) -> f64 {
        if self.packets == 0 {
            0.0
        } else {
            self.captured as f64 / self.packets as f64
        }
    }

    /// Share of time the sensor listens to any one hop.
    pub fn dwell_ratio(&self) -> f64 {
        self.dwell_ms as f64 / self.sweep_ms as f64
    }
}

/// Replays `duration_ms` of the scan schedule. A packet is captured when its
/// airtime overlaps a dwell on a hop whose window contains its frequency.
pub fn lora_replay(
    mut scan: ScanState,
    sample_rate: f64,
    dwell_ms: Millis,
    train: &PacketTrain,
    duration_ms: Millis,
) -> Result<LoraReplay> {
    if dwell_ms <= 0 || train.period_ms <= 0 || train.airtime_ms <= 0 || duration_ms <= 0 {
        return Err(Error::invalid(
            "dwell, period, airtime and duration must be positive",
        ));
    }
    let listens = |hop: f64| (train.freq_hz - hop).abs() < sample_rate / 2.0;
    if !scan.hop_list.iter().any(|&h| listens(h)) {
        return Err(Error::invalid(format!(
            "{} Hz is outside the scanned band",
            train.freq_hz
        )));
    }
    let packet_start = |k: i64| train.phase_ms + k * train.period_ms;
    let packets = (0..).take_while(|&k| packet_start(k) < duration_ms).count() as u64;
    let mut captured = vec![false; packets as usize];
    let mut t = 0;
    while t < duration_ms {
        let hop = scan.next_hop();
        if listens(hop) {
            let (a, b) = (t, t + dwell_ms);
            // packets with start in (a - airtime, b)
            let k_lo = (a - train.airtime_ms - train.phase_ms).div_euclid(train.period_ms);
            for k in k_lo.max(0).. {
                let s = packet_start(k);
                if s >= b || k as u64 >= packets {
                    break;
                }
                if s + train.airtime_ms > a {
                    captured[k as usize] = true;
                }
            }
        }
        t += dwell_ms;
    }
    let captured_at_ms: Vec<Millis> = (0..packets as i64)
        .filter(|&k| captured[k as usize])
        .map(packet_start)
        .collect();
    Ok(LoraReplay {
        packets,
        captured: captured_at_ms.len() as u64,
        captured_at_ms,
        dwell_ms,
        sweep_ms: scan.hop_list.len() as Millis * dwell_ms,
    })
}
