use std::collections::HashMap;
use std::sync::Arc;

use super::access::{authorize_owner, authorize_view, clamp, Grant};
use super::fusion::fused_view;
use super::iq::{IqRequest, IqRequestInfo, IqStore};
use super::query::{Mode, QuerySpec};
use super::stream::{StreamHub, Subscription};
use super::{AggregatedResponse, GridCell};
use crate::aggregate::{Level, Range};
use crate::batch::BatchLayer;
use crate::clock::Millis;
use crate::control::{CampaignManager, CampaignSpec, Registry, SensorRecord, SensorStatus};
use crate::scene::DEFAULT_SAMPLE_RATE_HZ;
use crate::sensor::{Band, HopStrategy, Pipeline, PsdSegment};
use crate::speed::SpeedLayer;
use crate::{Error, Result, SensorId, UserId};

/// The open API over the fused batch and speed views.
pub struct Api {
    pub registry: Arc<Registry>,
    pub batch: Arc<BatchLayer>,
    pub speed: Arc<SpeedLayer>,
    pub hub: Arc<StreamHub>,
    pub iq: Arc<IqStore>,
    pub campaigns: Arc<CampaignManager>,
}

impl Api {
    fn record(&self, sensor: &SensorId) -> Result<SensorRecord> {
        self.registry
            .get(sensor)
            .ok_or_else(|| Error::NotFound(format!("sensor {sensor}")))
    }

    pub fn query_aggregated(
        &self,
        who: Option<&UserId>,
        spec: &QuerySpec,
    ) -> Result<AggregatedResponse> {
        spec.validate()?;
        if spec.mode != Mode::Aggregated {
            return Err(Error::invalid("use the raw endpoint for raw mode"));
        }
        let rec = self.record(&spec.sensor)?;
        let grant = authorize_view(&rec, who)?;
        let (t_res, f_res) = clamp(grant, spec.t_res_ms, spec.f_res_hz);
        let level = Level::new(t_res, f_res);
        let view = fused_view(
            &self.batch.snapshot(),
            Some(self.speed.store()),
            &spec.sensor,
            &spec.range,
            level,
            spec.func,
        )?;
        Ok(AggregatedResponse {
            sensor_id: spec.sensor.clone(),
            func: spec.func,
            t0_ms: spec.range.t0_ms,
            t1_ms: spec.range.t1_ms,
            f0_hz: spec.range.f0_hz,
            f1_hz: spec.range.f1_hz,
            requested_t_res_ms: spec.t_res_ms,
            requested_f_res_hz: spec.f_res_hz,
            t_res_ms: t_res,
            f_res_hz: f_res,
            clamped: (t_res, f_res) != (spec.t_res_ms, spec.f_res_hz),
            batch_horizon_ms: view.batch_horizon_ms,
            cells: view.cells.iter().map(GridCell::from).collect(),
        })
    }

    /// Unmodified master segments; owner only.
    pub fn query_raw(
        &self,
        who: Option<&UserId>,
        sensor: &SensorId,
        range: &Range,
    ) -> Result<Vec<PsdSegment>> {
        let rec = self.record(sensor)?;
        authorize_owner(&rec, who)?;
        self.batch.raw_segments(sensor, range)
    }

    /// Authorizes every sensor before subscribing; one denial fails the
    /// whole request.
    pub fn stream_live(
        &self,
        who: Option<&UserId>,
        sensors: &[SensorId],
        f0: f64,
        f1: f64,
    ) -> Result<Subscription> {
        if sensors.is_empty() {
            return Err(Error::invalid("subscribe to at least one sensor"));
        }
        if !(f0 <= f1) {
            return Err(Error::invalid("f0 must not exceed f1"));
        }
        let mut grants: HashMap<SensorId, Grant> = HashMap::new();
        for s in sensors {
            grants.insert(s.clone(), authorize_view(&self.record(s)?, who)?);
        }
        Ok(self.hub.subscribe(grants, f0, f1))
    }

    /// Starts a temporary IQ campaign on an online sensor the caller owns.
    pub fn iq_request(
        &self,
        who: Option<&UserId>,
        sensor: &SensorId,
        duration_ms: Millis,
        band: Option<Band>,
    ) -> Result<IqRequestInfo> {
        let rec = self.record(sensor)?;
        authorize_owner(&rec, who)?;
        if duration_ms <= 0 {
            return Err(Error::invalid("duration must be positive"));
        }
        if rec.status != SensorStatus::Online {
            return Err(Error::Unavailable(format!("sensor {sensor} is offline")));
        }
        let band = band
            .or_else(|| self.campaigns.effective_config(sensor).map(|c| c.band))
            .unwrap_or_else(Band::full_range);
        let campaign = self.campaigns.create(CampaignSpec {
            name: format!("iq-request/{sensor}"),
            band,
            strategy: HopStrategy::Sequential,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
            pipeline: Pipeline::Iq,
            codec: None,
            target_sensors: vec![sensor.clone()],
            lifetime_ms: Some(duration_ms),
        })?;
        let owner = who.cloned().expect("owner checked");
        let info = self.iq.create(
            owner,
            sensor.clone(),
            campaign.campaign_id.clone(),
            duration_ms,
        );
        let report = self.campaigns.start(&campaign.campaign_id)?;
        if !report.acked.contains(sensor) {
            let _ = self.campaigns.stop(&campaign.campaign_id);
            return Err(Error::Unavailable(format!(
                "sensor {sensor} did not accept the IQ campaign"
            )));
        }
        Ok(info)
    }

    pub fn iq_download(&self, who: Option<&UserId>, request_id: &str) -> Result<IqRequest> {
        self.iq.get(request_id, who)
    }

    /// Housekeeping: ends expired campaigns and IQ requests.
    pub fn tick(&self) {
        self.campaigns.tick();
        self.iq.purge_expired();
    }
}
