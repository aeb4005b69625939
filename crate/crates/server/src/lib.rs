//! HTTP front end of the platform. Times are ms UTC, frequencies Hz and
//! powers dBm; bodies are JSON, the live stream is newline-delimited JSON.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, Query, RawQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use specmon_core::control::{
    Campaign, CampaignSpec, FanoutReport, LatLon, PublicSensor, Registration, SensorRecord,
    Visibility,
};
use specmon_core::platform::Platform;
use specmon_core::sensor::{Band, PsdSegment};
use specmon_core::serving::QuerySpec;
use specmon_core::speed::MetricsSnapshot;
use specmon_core::{CampaignId, Error, SensorId, UserId};

/// Error body: `{"error": kind, "message": text}`.
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) => StatusCode::BAD_REQUEST,
        Error::PermissionDenied(_) => StatusCode::FORBIDDEN,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::NoSuchView(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::OutOfRetention { .. } => StatusCode::GONE,
        Error::InvalidState(_) => StatusCode::CONFLICT,
        Error::Checksum(_) | Error::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid-argument",
        Error::Parse(_) => "parse",
        Error::PermissionDenied(_) => "permission-denied",
        Error::NotFound(_) => "not-found",
        Error::NoSuchView(_) => "no-such-view",
        Error::Unavailable(_) => "unavailable",
        Error::OutOfRetention { .. } => "out-of-retention",
        Error::InvalidState(_) => "invalid-state",
        Error::Checksum(_) | Error::Storage(_) => "internal",
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": kind_of(&self.0), "message": self.0.to_string() }));
        (status_of(&self.0), body).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;
type Shared = Arc<Platform>;

fn who(p: &Platform, headers: &HeaderMap) -> ApiResult<Option<UserId>> {
    let h = headers
        .get(header::AUTHORIZATION)
        .map(|v| v.to_str().unwrap_or(""));
    Ok(p.auth.authenticate(h)?)
}

fn require_user(p: &Platform, headers: &HeaderMap) -> ApiResult<UserId> {
    who(p, headers)?
        .ok_or_else(|| ApiError(Error::PermissionDenied("authentication required".into())))
}

/// Runs blocking platform work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> specmon_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Unavailable(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

pub fn router(platform: Shared) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/v1/sensors", post(register_sensor).get(list_sensors))
        .route("/api/v1/sensors/{id}/config", get(sensor_config))
        .route(
            "/api/v1/campaigns",
            post(start_campaign).get(list_campaigns),
        )
        .route("/api/v1/campaigns/{id}", get(get_campaign))
        .route("/api/v1/campaigns/{id}/stop", post(stop_campaign))
        .route("/api/v1/spectrum/aggregated", get(aggregated))
        .route("/api/v1/spectrum/raw", get(raw))
        .route("/api/v1/spectrum/stream", get(stream))
        .route("/api/v1/iq/requests", post(iq_request))
        .route("/api/v1/iq/requests/{id}", get(iq_download))
        .route("/api/v1/metrics", get(metrics))
        .with_state(platform)
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterBody {
    pub location: LatLon,
    #[serde(default)]
    pub antenna_desc: String,
    #[serde(default)]
    pub sensor_key: Option<String>,
    #[serde(default)]
    pub visibility: Visibility,
}

async fn register_sensor(
    State(p): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<RegisterBody>,
) -> ApiResult<(StatusCode, Json<SensorRecord>)> {
    let owner = require_user(&p, &headers)?;
    let reg = Registration {
        owner_id: owner,
        location: body.location,
        antenna_desc: body.antenna_desc,
        sensor_key: body.sensor_key,
        visibility: body.visibility,
    };
    let rec = blocking(move || p.api.registry.register(reg, p.clock.now_ms())).await?;
    Ok((StatusCode::CREATED, Json(rec)))
}

#[derive(Debug, Deserialize, Serialize)]
pub struct SensorListing {
    /// Map view of every non-private sensor.
    pub sensors: Vec<PublicSensor>,
    /// The caller's own sensors with true locations.
    pub owned: Vec<SensorRecord>,
}

async fn list_sensors(
    State(p): State<Shared>,
    headers: HeaderMap,
) -> ApiResult<Json<SensorListing>> {
    let user = who(&p, &headers)?;
    let sensors = p
        .api
        .registry
        .list_public()
        .into_iter()
        .filter(|s| s.visibility != Visibility::Private)
        .collect();
    let owned = user
        .map(|u| p.api.registry.list_owned(&u))
        .unwrap_or_default();
    Ok(Json(SensorListing { sensors, owned }))
}

fn is_admin(p: &Platform, user: &UserId) -> bool {
    p.config.admins.contains(user)
}

/// Admins may act on any sensor, everyone else only on their own.
fn authorize_sensors<'a>(
    p: &Platform,
    user: &UserId,
    sensors: impl IntoIterator<Item = &'a SensorId>,
) -> ApiResult<()> {
    if is_admin(p, user) {
        return Ok(());
    }
    for s in sensors {
        match p.api.registry.get(s) {
            Some(r) if &r.owner_id == user => {}
            Some(_) => {
                return Err(ApiError(Error::PermissionDenied(format!(
                    "{user} does not own {s}"
                ))))
            }
            None => return Err(ApiError(Error::NotFound(format!("sensor {s}")))),
        }
    }
    Ok(())
}

/// Configuration the sensor last acknowledged.
async fn sensor_config(
    State(p): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let user = require_user(&p, &headers)?;
    let id = SensorId::new(id);
    if !p.api.registry.contains(&id) {
        return Err(ApiError(Error::NotFound(format!("sensor {id}"))));
    }
    authorize_sensors(&p, &user, [&id])?;
    let cfg = p
        .api
        .campaigns
        .effective_config(&id)
        .ok_or_else(|| ApiError(Error::NotFound(format!("no acknowledged config for {id}"))))?;
    Ok(Json(cfg).into_response())
}

#[derive(Debug, Deserialize, Serialize)]
pub struct CampaignStarted {
    pub campaign: Campaign,
    pub report: FanoutReport,
}

/// Creates the campaign and fans it out in one step.
async fn start_campaign(
    State(p): State<Shared>,
    headers: HeaderMap,
    Json(spec): Json<CampaignSpec>,
) -> ApiResult<(StatusCode, Json<CampaignStarted>)> {
    let user = require_user(&p, &headers)?;
    if !is_admin(&p, &user) {
        authorize_sensors(&p, &user, &spec.target_sensors)?;
    }
    let out = blocking(move || {
        let c = p.api.campaigns.create(spec)?;
        let report = p.api.campaigns.start(&c.campaign_id)?;
        let campaign = p.api.campaigns.get(&c.campaign_id).unwrap_or(c);
        Ok(CampaignStarted { campaign, report })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn list_campaigns(
    State(p): State<Shared>,
    headers: HeaderMap,
) -> ApiResult<Json<Vec<Campaign>>> {
    require_user(&p, &headers)?;
    Ok(Json(p.api.campaigns.list()))
}

fn campaign_for(p: &Platform, user: &UserId, id: &str) -> ApiResult<Campaign> {
    let c = p
        .api
        .campaigns
        .get(&CampaignId::new(id))
        .ok_or_else(|| ApiError(Error::NotFound(format!("campaign {id}"))))?;
    authorize_sensors(p, user, &c.spec.target_sensors)?;
    Ok(c)
}

async fn get_campaign(
    State(p): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<Campaign>> {
    let user = require_user(&p, &headers)?;
    Ok(Json(campaign_for(&p, &user, &id)?))
}

async fn stop_campaign(
    State(p): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<CampaignStarted>> {
    let user = require_user(&p, &headers)?;
    let c = campaign_for(&p, &user, &id)?;
    let out = blocking(move || {
        let report = p.api.campaigns.stop(&c.campaign_id)?;
        let campaign = p.api.campaigns.get(&c.campaign_id).unwrap_or(c);
        Ok(CampaignStarted { campaign, report })
    })
    .await?;
    Ok(Json(out))
}

async fn aggregated(
    State(p): State<Shared>,
    headers: HeaderMap,
    RawQuery(q): RawQuery,
) -> ApiResult<Response> {
    let user = who(&p, &headers)?;
    let spec = QuerySpec::from_query(q.as_deref().unwrap_or(""))?;
    let resp = blocking(move || p.api.query_aggregated(user.as_ref(), &spec)).await?;
    Ok(Json(resp).into_response())
}

#[derive(Debug, Deserialize, Serialize)]
pub struct RawResponse {
    pub sensor_id: SensorId,
    pub segments: Vec<PsdSegment>,
}

async fn raw(
    State(p): State<Shared>,
    headers: HeaderMap,
    RawQuery(q): RawQuery,
) -> ApiResult<Json<RawResponse>> {
    let user = who(&p, &headers)?;
    let spec = QuerySpec::from_query(q.as_deref().unwrap_or(""))?;
    let segments = blocking({
        let sensor = spec.sensor.clone();
        move || p.api.query_raw(user.as_ref(), &sensor, &spec.range)
    })
    .await?;
    Ok(Json(RawResponse {
        sensor_id: spec.sensor,
        segments,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamParams {
    /// Comma-separated sensor ids.
    sensors: String,
    #[serde(default = "min_freq")]
    f0: f64,
    #[serde(default = "max_freq")]
    f1: f64,
}

fn min_freq() -> f64 {
    specmon_core::MIN_FREQ_HZ
}

fn max_freq() -> f64 {
    specmon_core::MAX_FREQ_HZ
}

/// One JSON record per closed window until the client disconnects.
async fn stream(
    State(p): State<Shared>,
    headers: HeaderMap,
    Query(params): Query<StreamParams>,
) -> ApiResult<Response> {
    let user = who(&p, &headers)?;
    let sensors: Vec<SensorId> = params
        .sensors
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(SensorId::new)
        .collect();
    let sub = p
        .api
        .stream_live(user.as_ref(), &sensors, params.f0, params.f1)?;
    let (tx, rx) = tokio::sync::mpsc::channel::<String>(64);
    std::thread::spawn(move || {
        while !tx.is_closed() {
            if let Some(rec) = sub.recv_timeout(Duration::from_millis(500)) {
                let mut line = serde_json::to_string(&rec).expect("record serializes");
                line.push('\n');
                if tx.blocking_send(line).is_err() {
                    break;
                }
            } else if sub.is_closed() {
                break;
            }
        }
    });
    let body = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv()
            .await
            .map(|line| (Ok::<_, std::convert::Infallible>(line), rx))
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(body))
        .expect("static response parts"))
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IqRequestBody {
    pub sensor: SensorId,
    pub duration_ms: i64,
    #[serde(default)]
    pub band: Option<Band>,
}

async fn iq_request(
    State(p): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<IqRequestBody>,
) -> ApiResult<Response> {
    let user = who(&p, &headers)?;
    let info = blocking(move || {
        p.api
            .iq_request(user.as_ref(), &body.sensor, body.duration_ms, body.band)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn iq_download(
    State(p): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let user = who(&p, &headers)?;
    let req = p.api.iq_download(user.as_ref(), &id)?;
    Ok(Json(req).into_response())
}

#[derive(Debug, Deserialize, Serialize)]
pub struct Metrics {
    pub speed: MetricsSnapshot,
    pub queue_heads: BTreeMap<u32, u64>,
    pub queue_corrupt_records: u64,
    pub master_envelopes: usize,
    pub batch_version: u64,
    pub stream_subscribers: usize,
}

async fn metrics(State(p): State<Shared>) -> ApiResult<Json<Metrics>> {
    let queue_heads = (0..p.queue.partitions())
        .map(|i| Ok((i, p.queue.head(i)?)))
        .collect::<specmon_core::Result<_>>()?;
    Ok(Json(Metrics {
        speed: p.api.speed.metrics().snapshot(),
        queue_heads,
        queue_corrupt_records: p.queue.corrupt_count(),
        master_envelopes: p.api.batch.with_master(|m| m.len()),
        batch_version: p.api.batch.snapshot().version,
        stream_subscribers: p.api.hub.subscriber_count(),
    }))
}
