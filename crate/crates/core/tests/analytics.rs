mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::{
    agent, buckets, lit_subcells, random_scene, sweep, tv_config, uncovered, Fixture,
    NOISE_MW_PER_HZ as NOISE, T0,
};
use specmon_core::analytics::{
    calibrated_rssi, detect_whitespace, lora_replay, occupancy, query_occupancy,
    CalibrationProfile, FreqRange, OccupancyRequest, PacketTrain,
};
use specmon_core::control::Visibility;
use specmon_core::scene::{Activity, Emitter, Scene};
use specmon_core::sensor::{Band, GainMeta, HopStrategy, ScanState, SensorAgent, SensorConfig};
use specmon_core::serving::GridCell;
use specmon_core::UserId;

const MIN: i64 = 60_000;

fn alice() -> UserId {
    UserId::new("alice")
}

/// One minute of TV-band sweeps from a fresh sensor with `scene`, sealed
/// into the batch layer; returns the default-threshold occupancy map.
fn tv_minute(fx: &Fixture, key: &str, scene: Scene) -> specmon_core::analytics::OccupancyMap {
    let id = fx.register("alice", key, Visibility::Public);
    let mut a = agent(id.as_str(), scene, tv_config(250));
    fx.feed(&sweep(&mut a, T0, 240));
    fx.batch_until(T0 + MIN);
    query_occupancy(
        fx.api(),
        Some(&alice()),
        &OccupancyRequest::tv_band(id, T0, T0 + MIN),
    )
    .unwrap()
}

#[test]
fn empty_scene_has_zero_occupancy() {
    let fx = Fixture::new();
    let map = tv_minute(&fx, "empty", Scene::new(NOISE, 1).unwrap());
    assert_eq!((map.nt, map.nf), (1, 400));
    assert!(map.duty.iter().all(|d| *d == Some(0.0)));
    assert_eq!(buckets(&detect_whitespace(&map, 0.0)).len(), 400);
}

#[test]
fn always_on_emitter_fills_its_eight_buckets() {
    let fx = Fixture::new();
    let scene = Scene::new(NOISE, 2)
        .unwrap()
        .with_emitter(Emitter::always_on(604e6, 8e6, 1e-7))
        .unwrap();
    let lit = lit_subcells(&scene);
    let map = tv_minute(&fx, "tv", scene);
    for fi in 0..map.nf {
        let mhz = 400 + fi as i64;
        let want = (mhz * 10..mhz * 10 + 10)
            .filter(|c| lit.contains(c))
            .count() as f64
            / 10.0;
        let d = map.get(0, fi).unwrap();
        assert_eq!(d, want, "{mhz} MHz");
        if (600..608).contains(&mhz) {
            assert_eq!(d, 1.0);
        }
    }
    // the hop windows 599.2-601.6 and 606.4-608.8 hold the emitter edges:
    // one adjacent bin plus one wrapped edge bin on each side
    assert_eq!(map.get(0, 199), Some(0.2));
    assert_eq!(map.get(0, 208), Some(0.2));
    assert_eq!(map.duty.iter().filter(|d| **d > Some(0.0)).count(), 10);
}

#[test]
fn quarter_duty_emitter_over_an_hour() {
    let fx = Fixture::new();
    let id = fx.register("alice", "duty", Visibility::Public);
    let scene = Scene::new(NOISE, 3)
        .unwrap()
        .with_emitter(Emitter {
            activity: Activity::Periodic {
                period_ms: 10 * MIN,
                on_ms: 150_000,
                phase_ms: 2_500,
            },
            ..Emitter::always_on(604e6, 4e6, 1e-7)
        })
        .unwrap();
    let config = SensorConfig {
        band: Band::new(600e6, 612e6).unwrap(),
        dwell_ms: 250,
        ..SensorConfig::default()
    };
    let mut a = agent(id.as_str(), scene, config);
    assert_eq!(a.scan().hop_list.len(), 5);
    let hour = 3_600_000;
    let envs = sweep(&mut a, T0, (hour / 250) as usize);
    fx.feed(&envs);
    fx.batch_until(T0 + hour);
    let req = OccupancyRequest {
        band: (600e6, 612e6),
        ..OccupancyRequest::tv_band(id, T0, T0 + hour)
    };
    let map = query_occupancy(fx.api(), Some(&alice()), &req).unwrap();
    assert_eq!(map.nt, 60);
    for mhz in 602..606 {
        let fi = (mhz - 600) as usize;
        let d = map.time_averaged(fi).unwrap();
        assert!((d - 0.25).abs() <= 0.05, "{mhz} MHz: {d}");
    }
    for mhz in [608, 609, 610] {
        assert_eq!(map.time_averaged((mhz - 600) as usize), Some(0.0));
    }
}

#[test]
fn whitespace_matches_uncovered_buckets_on_random_scenes() {
    let fx = Fixture::new();
    for seed in 0..20 {
        let scene = random_scene(100 + seed, true);
        let want = uncovered(&scene);
        let map = tv_minute(&fx, &format!("rand-{seed}"), scene);
        assert_eq!(buckets(&detect_whitespace(&map, 0.0)), want, "scene {seed}");
    }
}

#[test]
fn straddling_emitters_never_yield_false_free_channels() {
    let fx = Fixture::new();
    for seed in 0..20 {
        let mut scene = random_scene(500 + seed, false);
        // strong enough that every leaked bin clears the detector
        for e in &mut scene.emitters {
            e.power_mw = NOISE * 1e3 * e.bandwidth;
        }
        let free = uncovered(&scene);
        let lit: BTreeSet<i64> = lit_subcells(&scene)
            .iter()
            .map(|c| c.div_euclid(10))
            .collect();
        let map = tv_minute(&fx, &format!("wide-{seed}"), scene);
        let got = buckets(&detect_whitespace(&map, 0.0));
        assert!(got.is_subset(&free), "scene {seed}");
        assert_eq!(got, &free - &lit, "scene {seed}");
    }
}

#[test]
fn whitespace_merges_contiguous_free_buckets() {
    let cells: Vec<GridCell> = (0..6)
        .map(|i| GridCell {
            t_start_ms: 0,
            t_end_ms: MIN,
            f_start_hz: 400e6 + i as f64 * 1e6,
            f_end_hz: 401e6 + i as f64 * 1e6,
            value_dbm: Some(if i == 2 { -50.0 } else { -100.0 }),
            count: 1,
            layer: specmon_core::aggregate::Layer::Batch,
        })
        .collect();
    let range = specmon_core::aggregate::Range {
        t0_ms: 0,
        t1_ms: MIN,
        f0_hz: 400e6,
        f1_hz: 407e6,
    };
    let map = occupancy(
        &specmon_core::SensorId::new("s"),
        &cells,
        &range,
        MIN,
        1_000_000,
        -90.0,
    )
    .unwrap();
    let free = detect_whitespace(&map, 0.0);
    // 406 MHz was never observed and is not free
    assert_eq!(
        free,
        vec![
            FreqRange {
                lo_hz: 400e6,
                hi_hz: 402e6
            },
            FreqRange {
                lo_hz: 403e6,
                hi_hz: 406e6
            },
        ]
    );
    assert_eq!(map.get(0, 6), None);
}

fn rssi_agent(id: &str, power_dbm: f64, gain_db: f64) -> SensorAgent {
    let scene = Scene::new(NOISE, 9)
        .unwrap()
        .with_emitter(Emitter::always_on(
            434.5e6,
            125e3,
            10f64.powf(power_dbm / 10.0),
        ))
        .unwrap();
    let config = SensorConfig {
        band: Band::new(433.8e6, 436.2e6).unwrap(),
        ..SensorConfig::default()
    };
    let gain = GainMeta {
        antenna_gain_db: 2.0,
        frontend_gain_db: gain_db,
        cable_loss_db: 2.0,
    };
    SensorAgent::new(
        specmon_core::SensorId::new(id),
        Arc::new(scene),
        config,
        gain,
    )
    .unwrap()
}

#[test]
fn calibrated_rssi_recovers_injected_power() {
    for power in [-100.0, -90.0, -80.0, -70.0, -60.0] {
        let mut a = rssi_agent("lora", power, 20.0);
        for i in 0..10 {
            let seg = a.step(T0 + i * 125).unwrap().to_segment().unwrap();
            let profile = CalibrationProfile::from(seg.gain_meta);
            assert_eq!(profile.system_gain_db(), 20.0);
            let r = calibrated_rssi(&seg, (434.4e6, 434.6e6), &profile).unwrap();
            assert!((r - power).abs() <= 1.0, "{power} dBm read as {r}");
        }
    }
}

#[test]
fn rssi_is_linear_in_power() {
    let mut a = rssi_agent("lin", -80.0, 20.0);
    let seg = a.step(T0).unwrap().to_segment().unwrap();
    let p = CalibrationProfile::from(seg.gain_meta);
    let base = calibrated_rssi(&seg, (434.4e6, 434.6e6), &p).unwrap();
    for k in [0.01, 0.5, 2.0, 1000.0] {
        let mut s = seg.clone();
        s.bins.iter_mut().for_each(|b| *b *= k);
        let r = calibrated_rssi(&s, (434.4e6, 434.6e6), &p).unwrap();
        assert!((r - base - 10.0 * f64::log10(k)).abs() < 1e-9);
    }
    let hot = CalibrationProfile {
        frontend_gain_db: 30.0,
        ..p
    };
    assert!(
        (calibrated_rssi(&seg, (434.4e6, 434.6e6), &hot).unwrap() - (base - 10.0)).abs() < 1e-9
    );
}

#[test]
fn lora_capture_tracks_the_dwell_ratio() {
    let scan = ScanState::new((400e6, 800e6), 2.4e6, HopStrategy::Sequential).unwrap();
    let train = PacketTrain {
        freq_hz: 434.5e6,
        period_ms: 3_000,
        airtime_ms: 60,
        phase_ms: 0,
    };
    let r = lora_replay(scan, 2.4e6, 250, &train, 80 * MIN).unwrap();
    assert_eq!(r.packets, 1_600);
    assert_eq!(r.sweep_ms, 41_750);
    assert!((r.fraction() - r.dwell_ratio()).abs() <= 0.05);
    // a packet is caught when its airtime overlaps the one matching dwell
    let oracle = (250.0 + 60.0) / 41_750.0;
    assert!(
        (r.fraction() - oracle).abs() < 0.004,
        "{} vs {oracle}",
        r.fraction()
    );
    // gaps between captures are whole sweeps, the dips seen in the field
    for w in r.captured_at_ms.windows(2) {
        assert!(w[1] - w[0] >= 39_000);
    }
}

#[test]
fn lora_outside_the_band_is_rejected() {
    let scan = ScanState::new((400e6, 800e6), 2.4e6, HopStrategy::Sequential).unwrap();
    let train = PacketTrain {
        freq_hz: 868e6,
        period_ms: 3_000,
        airtime_ms: 60,
        phase_ms: 0,
    };
    assert!(lora_replay(scan, 2.4e6, 250, &train, MIN).is_err());
}
