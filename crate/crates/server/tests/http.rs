#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::{BufRead, BufReader};
use std::sync::atomic::Ordering;
use std::sync::{mpsc, Arc};
use std::time::Duration;

use common::{agent, responder, sweep, tv_config, wait_for, Fixture, T0};
use serde_json::{json, Value};
use specmon_core::control::{haversine_km, SensorStatus, Transport};
use specmon_core::scene::{Emitter, Scene};
use specmon_core::sensor::{PsdSegment, SensorConfig};
use specmon_core::UserId;

const MIN: i64 = 60_000;

struct Server {
    fx: Fixture,
    base: String,
    agent: ureq::Agent,
    _rt: tokio::runtime::Runtime,
}

impl Server {
    fn start() -> Self {
        let fx = Fixture::with(|cfg| {
            cfg.tokens.insert("tok-alice".into(), UserId::new("alice"));
            cfg.tokens.insert("tok-bob".into(), UserId::new("bob"));
        });
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = specmon_server::router(fx.platform.clone());
        rt.spawn(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, app).await.unwrap();
        });
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(20)))
            .build()
            .into();
        Self {
            fx,
            base,
            agent,
            _rt: rt,
        }
    }

    fn get(&self, path: &str, token: Option<&str>) -> (u16, Value) {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.call().unwrap();
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap();
        (
            status,
            serde_json::from_str(&body).unwrap_or(Value::String(body)),
        )
    }

    fn post(&self, path: &str, token: Option<&str>, body: Value) -> (u16, Value) {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .unwrap();
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap();
        (
            status,
            serde_json::from_str(&body).unwrap_or(Value::String(body)),
        )
    }

    fn register(&self, token: &str, key: &str, visibility: &str) -> String {
        let (status, rec) = self.post(
            "/api/v1/sensors",
            Some(token),
            json!({"location": {"lat": 48.85, "lon": 2.35}, "sensor_key": key, "visibility": visibility}),
        );
        assert_eq!(status, 201, "{rec}");
        rec["sensor_id"].as_str().unwrap().to_owned()
    }
}

const ALICE: Option<&str> = Some("tok-alice");
const BOB: Option<&str> = Some("tok-bob");

fn scene() -> Scene {
    Scene::new(1e-17, 3)
        .unwrap()
        .with_emitter(Emitter::always_on(604e6, 8e6, 1e-7))
        .unwrap()
}

fn query(sensor: &str, t_res: i64, f_res: u64) -> String {
    format!(
        "sensor={sensor}&t0={T0}&t1={}&f0=400000000&f1=800000000&tRes={t_res}&fRes={f_res}&fn=max",
        T0 + MIN
    )
}

#[test]
fn health_and_error_bodies() {
    let s = Server::start();
    assert_eq!(s.get("/healthz", None), (200, Value::String("ok".into())));
    let (code, body) = s.get("/api/v1/spectrum/aggregated", None);
    assert_eq!(code, 400);
    assert_eq!(body["error"], "parse");
    assert!(body["message"].is_string());
    let (code, body) = s.get(
        &format!(
            "/api/v1/spectrum/aggregated?{}",
            query("s-nobody", MIN, 100_000)
        ),
        None,
    );
    assert_eq!((code, body["error"].as_str()), (404, Some("not-found")));
    let (code, body) = s.get("/api/v1/campaigns", Some("forged"));
    assert_eq!(
        (code, body["error"].as_str()),
        (403, Some("permission-denied"))
    );
    let (code, _) = s.get("/api/v1/campaigns", None);
    assert_eq!(code, 403);
}

#[test]
fn registration_and_listing() {
    let s = Server::start();
    let (code, _) = s.post(
        "/api/v1/sensors",
        None,
        json!({"location": {"lat": 48.85, "lon": 2.35}}),
    );
    assert_eq!(code, 403);
    let public = s.register("tok-alice", "roof", "public");
    let private = s.register("tok-alice", "attic", "private");
    assert_eq!(s.register("tok-alice", "roof", "public"), public);

    let (code, bob_view) = s.get("/api/v1/sensors", BOB);
    assert_eq!(code, 200);
    let listed: Vec<&str> = bob_view["sensors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["sensor_id"].as_str().unwrap())
        .collect();
    assert_eq!(listed, vec![public.as_str()]);
    assert!(bob_view["owned"].as_array().unwrap().is_empty());
    assert!(!bob_view.to_string().contains("true_location"));

    let (_, alice_view) = s.get("/api/v1/sensors", ALICE);
    let owned = alice_view["owned"].as_array().unwrap();
    assert_eq!(owned.len(), 2);
    assert!(owned.iter().any(|r| r["sensor_id"] == private.as_str()));
    let rec = &owned
        .iter()
        .find(|r| r["sensor_id"] == public.as_str())
        .unwrap();
    let loc = |v: &Value| {
        specmon_core::control::LatLon::new(v["lat"].as_f64().unwrap(), v["lon"].as_f64().unwrap())
            .unwrap()
    };
    let d = haversine_km(loc(&rec["true_location"]), loc(&rec["public_location"]));
    assert!(d <= specmon_core::control::DEFAULT_OBFUSCATION_RADIUS_KM);
}

#[test]
fn aggregated_and_raw_over_http() {
    let s = Server::start();
    let id = s.register("tok-alice", "k1", "public");
    let mut a = agent(&id, scene(), tv_config(250));
    s.fx.feed(&sweep(&mut a, T0, 240));
    s.fx.batch_until(T0 + MIN);

    let (code, own) = s.get(
        &format!("/api/v1/spectrum/aggregated?{}", query(&id, 5_000, 100_000)),
        ALICE,
    );
    assert_eq!(code, 200, "{own}");
    assert_eq!(
        (own["t_res_ms"].as_i64(), own["clamped"].as_bool()),
        (Some(5_000), Some(false))
    );
    let cells = own["cells"].as_array().unwrap();
    assert!(!cells.is_empty());
    let peak = cells
        .iter()
        .filter_map(|c| c["value_dbm"].as_f64())
        .fold(f64::MIN, f64::max);
    assert!(peak > -100.0 && peak < 0.0, "peak {peak} dBm");

    let (code, other) = s.get(
        &format!("/api/v1/spectrum/aggregated?{}", query(&id, 5_000, 100_000)),
        BOB,
    );
    assert_eq!(code, 200);
    assert_eq!(other["clamped"], true);
    assert_eq!(
        (other["t_res_ms"].as_i64(), other["f_res_hz"].as_u64()),
        (Some(60_000), Some(100_000))
    );
    let (_, anon) = s.get(
        &format!("/api/v1/spectrum/aggregated?{}", query(&id, MIN, 100_000)),
        None,
    );
    assert_eq!(anon["cells"], other["cells"]);

    let (code, body) = s.get(
        &format!("/api/v1/spectrum/aggregated?{}", query(&id, 5_000, 10_000)),
        ALICE,
    );
    assert_eq!((code, body["error"].as_str()), (422, Some("no-such-view")));

    let (code, raw) = s.get(
        &format!("/api/v1/spectrum/raw?{}", query(&id, MIN, 100_000)),
        ALICE,
    );
    assert_eq!(code, 200);
    let segs: Vec<PsdSegment> = serde_json::from_value(raw["segments"].clone()).unwrap();
    assert_eq!(segs.len(), 240);
    let mut again = agent(&id, scene(), tv_config(250));
    let replayed = sweep(&mut again, T0, 18);
    assert_eq!(segs[17], replayed[17].to_segment().unwrap());
    for who in [BOB, None] {
        let (code, _) = s.get(
            &format!("/api/v1/spectrum/raw?{}", query(&id, MIN, 100_000)),
            who,
        );
        assert_eq!(code, 403);
    }
}

#[test]
fn stream_is_newline_delimited_json() {
    let s = Server::start();
    let id = s.register("tok-alice", "k2", "public");
    let private = s.register("tok-alice", "k3", "private");
    s.fx.platform.start_speed().unwrap();

    let (code, _) = s.get(&format!("/api/v1/spectrum/stream?sensors={private}"), BOB);
    assert_eq!(code, 403);

    let resp = s
        .agent
        .get(format!(
            "{}/api/v1/spectrum/stream?sensors={id}&f0=400e6&f1=800e6",
            s.base
        ))
        .header("Authorization", "Bearer tok-bob")
        .call()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let reader = BufReader::new(resp.into_body().into_reader());
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    wait_for("subscriber", || s.fx.api().hub.subscriber_count() == 1);

    let mut a = agent(&id, scene(), tv_config(250));
    for e in sweep(&mut a, T0, 480) {
        s.fx.platform.enqueue(&e).unwrap();
    }
    wait_for("speed ingest", || {
        s.fx.api().speed.metrics().snapshot().envelopes == 480
    });
    s.fx.clock.set(T0 + 2 * MIN + 2_000);
    let mut records = Vec::new();
    while records.len() < 2 {
        let line = rx
            .recv_timeout(Duration::from_secs(20))
            .expect("stream record");
        assert!(!line.contains('\n'));
        records.push(serde_json::from_str::<Value>(&line).unwrap());
    }
    // a capped subscriber gets minute records
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["sensor_id"], id.as_str());
        assert_eq!(r["t_res_ms"], 60_000);
        assert_eq!(r["t_start_ms"], T0 + i as i64 * MIN);
        assert_eq!(r["cells"].as_array().unwrap().len(), 4_000);
    }
}

#[test]
fn campaigns_and_iq_over_http() {
    let s = Server::start();
    let id = s.register("tok-alice", "k4", "public");
    s.fx.platform.start_speed().unwrap();
    let transport: Arc<dyn Transport> = s.fx.platform.broker.clone();
    let a = agent(&id, scene(), SensorConfig::default());
    a.announce(&*transport, SensorStatus::Online, T0).unwrap();
    wait_for("online", || {
        s.fx.api().registry.get(&id.as_str().into()).unwrap().status == SensorStatus::Online
    });
    let (stop, h) = responder(a, transport);

    let spec =
        json!({"name": "tv", "band": {"lo_hz": 470e6, "hi_hz": 700e6}, "target_sensors": [id]});
    let (code, _) = s.post("/api/v1/campaigns", BOB, spec.clone());
    assert_eq!(code, 403);
    let (code, started) = s.post("/api/v1/campaigns", ALICE, spec);
    assert_eq!(code, 201, "{started}");
    assert_eq!(started["report"]["acked"], json!([id]));
    assert_eq!(started["campaign"]["state"], "running");
    let cid = started["campaign"]["campaign_id"]
        .as_str()
        .unwrap()
        .to_owned();

    let (code, cfg) = s.get(&format!("/api/v1/sensors/{id}/config"), ALICE);
    assert_eq!(code, 200);
    assert_eq!(cfg["band"], json!({"lo_hz": 470e6, "hi_hz": 700e6}));
    assert_eq!(s.get(&format!("/api/v1/sensors/{id}/config"), BOB).0, 403);
    assert_eq!(s.get(&format!("/api/v1/campaigns/{cid}"), BOB).0, 403);
    let (_, listed) = s.get("/api/v1/campaigns", ALICE);
    assert_eq!(listed.as_array().unwrap().len(), 1);

    let (code, stopped) = s.post(&format!("/api/v1/campaigns/{cid}/stop"), ALICE, json!(null));
    assert_eq!(code, 200, "{stopped}");
    assert_eq!(stopped["campaign"]["state"], "stopped");
    let (_, cfg) = s.get(&format!("/api/v1/sensors/{id}/config"), ALICE);
    assert_eq!(cfg["band"], json!({"lo_hz": 20e6, "hi_hz": 6e9}));

    let iq = json!({"sensor": id, "duration_ms": 2_000, "band": {"lo_hz": 433e6, "hi_hz": 436e6}});
    assert_eq!(s.post("/api/v1/iq/requests", BOB, iq.clone()).0, 403);
    let (code, info) = s.post("/api/v1/iq/requests", ALICE, iq);
    assert_eq!(code, 201, "{info}");
    stop.store(true, Ordering::Relaxed);
    let mut a = h.join().unwrap();
    for i in 0..3 {
        s.fx.platform
            .enqueue(&a.step(T0 + i * 125).unwrap())
            .unwrap();
    }
    let rid = info["request_id"].as_str().unwrap();
    wait_for("IQ staged", || {
        s.get(&format!("/api/v1/iq/requests/{rid}"), ALICE).1["messages"]
            .as_array()
            .is_some_and(|m| m.len() == 3)
    });
    assert_eq!(s.get(&format!("/api/v1/iq/requests/{rid}"), BOB).0, 403);

    let (code, m) = s.get("/api/v1/metrics", None);
    assert_eq!(code, 200);
    assert_eq!(m["speed"]["envelopes"], 0);
    assert!(
        m["queue_heads"]
            .as_object()
            .unwrap()
            .values()
            .map(|v| v.as_u64().unwrap())
            .sum::<u64>()
            >= 3
    );
    assert_eq!(m["stream_subscribers"], 0);
}

#[test]
fn bad_bodies_are_rejected() {
    let s = Server::start();
    let (code, _) = s.post(
        "/api/v1/sensors",
        ALICE,
        json!({"location": {"lat": 123.0, "lon": 0.0}}),
    );
    assert!(code == 400 || code == 422, "{code}");
    let (code, body) = s.post(
        "/api/v1/campaigns",
        ALICE,
        json!({"band": {"lo_hz": 900e6, "hi_hz": 100e6}, "target_sensors": []}),
    );
    assert!(code == 400 || code == 422, "{code} {body}");
}
