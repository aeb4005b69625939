//! Frequency hopping across a campaign band.
//!
//! The band is covered by hops of one sample rate each. The sequential
//! strategy sweeps round-robin; the bursty-weighted strategy favours hops
//! whose in-band power changes a lot between visits.

use serde::{Deserialize, Serialize};

use super::psd::PsdSegment;
use crate::clock::Millis;
use crate::{Error, Result};

/// EWMA weight of the newest power delta.
pub const BURSTINESS_ALPHA: f64 = 0.3;
/// Priority floor added to normalized burstiness. At least 1/9 so every hop
/// keeps a visit share of at least `1 / (10 * hops)`.
pub const DEFAULT_EPSILON: f64 = 0.125;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopStrategy {
    #[default]
    Sequential,
    BurstyWeighted,
}

/// Hop centers covering `[f_lo, f_hi]` with steps of `step`; the last hop
/// may extend past `f_hi`.
pub fn hop_centers(f_lo: f64, f_hi: f64, step: f64) -> Vec<f64> {
    let n = (((f_hi - f_lo) / step) - 1e-9).ceil().max(1.0) as usize;
    (0..n)
        .map(|i| f_lo + step / 2.0 + i as f64 * step)
        .collect()
}

/// Time for one full sequential sweep of a band.
pub fn sweep_time_ms(f_lo: f64, f_hi: f64, step: f64, dwell_ms: Millis) -> Millis {
    hop_centers(f_lo, f_hi, step).len() as Millis * dwell_ms
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanState {
    pub band: (f64, f64),
    pub hop_list: Vec<f64>,
    pub visit_counts: Vec<u64>,
    pub burstiness: Vec<f64>,
    last_power: Vec<Option<f64>>,
    pub strategy: HopStrategy,
    pub epsilon: f64,
    cursor: usize,
}

impl ScanState {
    pub fn new(band: (f64, f64), sample_rate: f64, strategy: HopStrategy) -> Result<Self> {
        if !(band.0 < band.1) || !(sample_rate > 0.0) {
            return Err(Error::invalid("scan needs f_lo < f_hi and sample_rate > 0"));
        }
        let hop_list = hop_centers(band.0, band.1, sample_rate);
        let n = hop_list.len();
        Ok(Self {
            band,
            hop_list,
            visit_counts: vec![0; n],
            burstiness: vec![0.0; n],
            last_power: vec![None; n],
            strategy,
            epsilon: DEFAULT_EPSILON,
            cursor: 0,
        })
    }

    /// Picks the next hop and counts the visit.
    pub fn next_hop(&mut self) -> f64 {
        let i = match self.strategy {
            HopStrategy::Sequential => {
                let i = self.cursor % self.hop_list.len();
                self.cursor = (i + 1) % self.hop_list.len();
                i
            }
            HopStrategy::BurstyWeighted => self.best_weighted(),
        };
        self.visit_counts[i] += 1;
        self.hop_list[i]
    }

    /// `argmax (b_i / b_max + eps) / (visits_i + 1)`, lowest frequency on ties.
    fn best_weighted(&self) -> usize {
        let b_max = self.burstiness.iter().cloned().fold(0.0, f64::max);
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (i, (&b, &c)) in self.burstiness.iter().zip(&self.visit_counts).enumerate() {
            let norm = if b_max > 0.0 { b / b_max } else { 0.0 };
            let p = (norm + self.epsilon) / (c as f64 + 1.0);
            if p > best_p {
                best_p = p;
                best = i;
            }
        }
        best
    }

    pub fn hop_index(&self, center_freq: f64) -> Option<usize> {
        self.hop_list
            .iter()
            .position(|h| (h - center_freq).abs() < 1.0)
    }

    /// Folds a new visit's in-band power into the hop's burstiness score.
    pub fn update_burstiness(&mut self, segment: &PsdSegment) -> Result<()> {
        let i = self.hop_index(segment.center_freq).ok_or_else(|| {
            Error::invalid(format!(
                "{} Hz is not a hop of this scan",
                segment.center_freq
            ))
        })?;
        self.observe_power(i, segment.total_power_mw());
        Ok(())
    }

    pub(crate) fn observe_power(&mut self, i: usize, power: f64) {
        if let Some(prev) = self.last_power[i] {
            let delta = (power - prev).abs();
            self.burstiness[i] =
                (1.0 - BURSTINESS_ALPHA) * self.burstiness[i] + BURSTINESS_ALPHA * delta;
        }
        self.last_power[i] = Some(power);
    }
}
