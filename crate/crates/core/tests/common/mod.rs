#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::{Complex32, Complex64};

use specmon_core::analytics::FreqRange;
use specmon_core::clock::{Clock, ManualClock, Millis, SharedClock};
use specmon_core::envelope::Envelope;
use specmon_core::scene::{Emitter, SampleBlock, Scene};
use specmon_core::sensor::{GainMeta, PsdSegment, SensorAgent, SensorConfig, Window};
use specmon_core::{CampaignId, SensorId};

/// Direct O(N^2) DFT of each frame, squared, averaged over frames and
/// divided by N, then rotated so index 0 is the lowest frequency.
pub fn dft_psd_oracle(samples: &[Complex32], n: usize, n_avg: usize, window: Window) -> Vec<f64> {
    let w = window.coefficients(n);
    let mut acc = vec![0.0f64; n];
    for m in 0..n_avg {
        let frame = &samples[m * n..(m + 1) * n];
        for (k, a) in acc.iter_mut().enumerate() {
            let mut x = Complex64::new(0.0, 0.0);
            for (j, s) in frame.iter().enumerate() {
                let v = Complex64::new(s.re as f64, s.im as f64) * w[j];
                x += v * Complex64::from_polar(1.0, -TAU * (k * j) as f64 / n as f64);
            }
            *a += x.norm_sqr();
        }
    }
    let scale = 1.0 / (n_avg as f64 * n as f64);
    (0..n).map(|i| acc[(i + n / 2) % n] * scale).collect()
}

pub fn gaussian_block(seed: u64, len: usize) -> SampleBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| {
            Complex32::new(
                rng.random::<f32>() * 2.0 - 1.0,
                rng.random::<f32>() * 2.0 - 1.0,
            )
        })
        .collect();
    SampleBlock {
        sensor_id: SensorId::new("oracle"),
        center_freq: 100e6,
        sample_rate: 2.4e6,
        t0: 0,
        samples,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

pub fn manual(t: Millis) -> (Arc<ManualClock>, SharedClock) {
    let c = Arc::new(ManualClock::new(t));
    (c.clone(), c)
}

/// A synthetic segment with the given bins, for exact aggregation checks.
pub fn segment(
    sensor: &str,
    t0: Millis,
    center: f64,
    bin_width: f64,
    bins: Vec<f64>,
) -> PsdSegment {
    PsdSegment {
        sensor_id: SensorId::new(sensor),
        campaign_id: CampaignId::default_campaign(),
        center_freq: center,
        bin_width,
        t0,
        dwell_ms: 125,
        bins,
        n_avg: 1,
        gain_meta: GainMeta::default(),
    }
}

pub fn random_segment(rng: &mut impl Rng, sensor: &str, t0: Millis, center: f64) -> PsdSegment {
    let bins = (0..256).map(|_| rng.random::<f64>() * 1e-6).collect();
    segment(sensor, t0, center, 2.4e6 / 256.0, bins)
}

pub fn env(seq: u64, seg: &PsdSegment) -> Envelope {
    Envelope::from_segment(seq, seg)
}

/// Runs `agent` for `n` dwells starting at `t0`, one per `dwell_ms`.
pub fn sweep(agent: &mut SensorAgent, t0: Millis, n: usize) -> Vec<Envelope> {
    let dwell = agent.config().dwell_ms;
    (0..n)
        .map(|i| agent.step(t0 + i as Millis * dwell).unwrap())
        .collect()
}

pub fn agent(id: &str, scene: Scene, config: SensorConfig) -> SensorAgent {
    SensorAgent::new(
        SensorId::new(id),
        Arc::new(scene),
        config,
        GainMeta::default(),
    )
    .unwrap()
}

pub fn tv_config(dwell_ms: Millis) -> SensorConfig {
    SensorConfig {
        band: specmon_core::sensor::Band::new(400e6, 800e6).unwrap(),
        dwell_ms,
        ..SensorConfig::default()
    }
}

/// Serves commands for `agent` on `transport` until the returned flag is set.
pub fn responder(
    mut agent: SensorAgent,
    transport: Arc<dyn specmon_core::control::Transport>,
) -> (
    Arc<std::sync::atomic::AtomicBool>,
    std::thread::JoinHandle<SensorAgent>,
) {
    use std::sync::atomic::{AtomicBool, Ordering};
    let stop = Arc::new(AtomicBool::new(false));
    let rx = transport
        .subscribe(&specmon_core::control::cmd_topic(agent.id()))
        .unwrap();
    let flag = stop.clone();
    let h = std::thread::spawn(move || {
        while !flag.load(Ordering::Relaxed) {
            agent.drain_commands(&rx, &*transport);
            std::thread::sleep(std::time::Duration::from_millis(2));
        }
        agent
    });
    (stop, h)
}

/// An hour-aligned epoch time, so every level's buckets start at `T0`.
pub const T0: Millis = 1_699_999_200_000;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub clock: Arc<ManualClock>,
    pub platform: Arc<specmon_core::platform::Platform>,
}

impl Fixture {
    pub fn new() -> Self {
        Self::with(|_| {})
    }

    pub fn with(tweak: impl FnOnce(&mut specmon_core::platform::PlatformConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (clock, shared) = manual(T0);
        let mut cfg = specmon_core::platform::PlatformConfig::with_dir(dir.path());
        cfg.worker_poll_ms = 10;
        tweak(&mut cfg);
        let platform = specmon_core::platform::Platform::open(cfg, shared).unwrap();
        Self {
            dir,
            clock,
            platform,
        }
    }

    pub fn api(&self) -> &specmon_core::serving::Api {
        &self.platform.api
    }

    pub fn register(
        &self,
        owner: &str,
        key: &str,
        visibility: specmon_core::control::Visibility,
    ) -> SensorId {
        self.api()
            .registry
            .register(
                specmon_core::control::Registration {
                    owner_id: specmon_core::UserId::new(owner),
                    location: specmon_core::control::LatLon::new(48.85, 2.35).unwrap(),
                    antenna_desc: "discone".into(),
                    sensor_key: Some(key.into()),
                    visibility,
                },
                T0,
            )
            .unwrap()
            .sensor_id
    }

    /// Enqueues for the batch layer and feeds the speed layer directly,
    /// advancing the clock to each envelope's start.
    pub fn feed(&self, envs: &[Envelope]) {
        for e in envs {
            self.platform.enqueue(e).unwrap();
            if self.clock.now_ms() < e.t0_ms() {
                self.clock.set(e.t0_ms());
            }
            self.platform.api.speed.tick();
            self.platform.api.speed.ingest(e);
        }
    }

    /// Moves the clock to `t` and closes due speed windows.
    pub fn settle(&self, t: Millis) {
        self.clock.set(t);
        self.platform.api.speed.tick();
    }

    /// Runs a batch cycle whose build stops at `to`. The clock is left at
    /// `to` plus the settle delay, or later if it already was.
    pub fn batch_until(&self, to: Millis) -> specmon_core::platform::BatchCycle {
        let keep = self.clock.now_ms();
        self.clock.set(to + self.platform.config.batch_settle_ms);
        let c = self.platform.run_batch_cycle().unwrap();
        self.clock.set(keep.max(self.clock.now_ms()));
        c
    }
}

pub fn wait_for(what: &str, mut f: impl FnMut() -> bool) {
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(20);
    while !f() {
        assert!(
            std::time::Instant::now() < deadline,
            "timed out waiting for {what}"
        );
        std::thread::sleep(std::time::Duration::from_millis(5));
    }
}

// Scene oracles for occupancy and white-space checks.

pub const NOISE_MW_PER_HZ: f64 = 1e-17;

pub fn buckets(ranges: &[FreqRange]) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    for r in ranges {
        let mut f = r.lo_hz;
        while f < r.hi_hz {
            out.insert((f / 1e6).round() as i64);
            f += 1e6;
        }
    }
    out
}

/// 100 kHz sub-cells a TV sweep lights for strong emitters. Each hop
/// window holds its emitters on the DFT grid; the Hann window spreads each
/// tone into its two neighbours, circularly within the window, so an
/// emitter touching one window edge also lights the bin at the other.
pub fn lit_subcells(scene: &Scene) -> BTreeSet<i64> {
    let (n, fs) = (256i64, 2.4e6);
    let step = fs / n as f64;
    let mut lit = BTreeSet::new();
    for k in 0..167 {
        let center = 400e6 + 1.2e6 + k as f64 * fs;
        let mut bins = BTreeSet::new();
        for e in &scene.emitters {
            let lo = e.lo().max(center - fs / 2.0) - center;
            let hi = e.hi().min(center + fs / 2.0) - center;
            if hi <= lo {
                continue;
            }
            let first = ((lo / step).ceil() as i64).max(-n / 2);
            let last = ((hi / step).ceil() as i64 - 1).min(n / 2 - 1);
            for m in first - 1..=last + 1 {
                bins.insert((m + n / 2).rem_euclid(n) - n / 2);
            }
        }
        for m in bins {
            lit.insert(((center + m as f64 * step) / 100e3).floor() as i64);
        }
    }
    lit
}

/// Hop windows of the TV sweep start every 2.4 MHz from 400 MHz.
fn hop_offset(f: f64) -> f64 {
    let x = ((f - 400e6) / 2.4e6).fract() * 2.4e6;
    x.min(2.4e6 - x)
}

fn mhz_offset(f: f64) -> f64 {
    let x = (f / 1e6).fract() * 1e6;
    x.min(1e6 - x)
}

/// Random always-on emitters, 10 to 30 dB above the noise density, with
/// no two closer than 1 MHz and under 40% of the band covered. `contained`
/// keeps each emitter inside one hop window, at least 50 kHz from its
/// edges and from every 1 MHz boundary; otherwise emitters are up to
/// 20 MHz wide and may straddle windows.
pub fn random_scene(seed: u64, contained: bool) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::new(NOISE_MW_PER_HZ, seed).unwrap();
    let n = rng.random_range(1..=8);
    let mut covered = 0.0;
    while scene.emitters.len() < n {
        let lo: f64 = rng.random_range(401e6..780e6);
        let hi = lo + rng.random_range(100e3..if contained { 2.3e6 } else { 20e6 });
        if contained {
            let window = ((lo - 400e6) / 2.4e6).floor();
            if ((hi - 400e6) / 2.4e6).floor() != window
                || [lo, hi]
                    .iter()
                    .any(|&f| hop_offset(f) < 50e3 || mhz_offset(f) < 50e3)
            {
                continue;
            }
        }
        if hi > 799e6
            || scene
                .emitters
                .iter()
                .any(|e| e.lo() < hi + 1e6 && lo < e.hi() + 1e6)
        {
            continue;
        }
        if covered + (hi - lo) > 160e6 {
            continue;
        }
        covered += hi - lo;
        let density = NOISE_MW_PER_HZ * 10f64.powf(rng.random_range(1.0..3.0));
        scene = scene
            .with_emitter(Emitter::always_on(
                (lo + hi) / 2.0,
                hi - lo,
                density * (hi - lo),
            ))
            .unwrap();
    }
    scene
}

/// 1 MHz buckets of 400-800 MHz that no emitter touches.
pub fn uncovered(scene: &Scene) -> BTreeSet<i64> {
    (400..800)
        .filter(|&m| {
            let (lo, hi) = (m as f64 * 1e6, (m + 1) as f64 * 1e6);
            scene.emitters.iter().all(|e| e.hi() <= lo || e.lo() >= hi)
        })
        .collect()
}
