//! Transient staging of on-demand IQ captures.
//!
//! A request owns a temporary IQ campaign; envelopes carrying that
//! campaign id are decoded into the request. Requests are deleted once
//! their TTL after the capture window has passed.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::clock::{Millis, SharedClock};
use crate::envelope::Envelope;
use crate::sensor::IqMessage;
use crate::{CampaignId, Error, Result, SensorId, UserId};

pub const DEFAULT_IQ_TTL_MS: Millis = 3_600_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqRequestInfo {
    pub request_id: String,
    pub sensor_id: SensorId,
    pub campaign_id: CampaignId,
    pub created_ms: Millis,
    pub capture_until_ms: Millis,
    pub expires_ms: Millis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqRequest {
    pub info: IqRequestInfo,
    pub owner: UserId,
    pub messages: Vec<IqMessage>,
}

pub struct IqStore {
    ttl_ms: Millis,
    clock: SharedClock,
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    requests: HashMap<String, IqRequest>,
    by_campaign: HashMap<CampaignId, String>,
    next: u64,
}

impl IqStore {
    pub fn new(ttl_ms: Millis, clock: SharedClock) -> Self {
        Self {
            ttl_ms,
            clock,
            inner: Mutex::default(),
        }
    }

    pub fn create(
        &self,
        owner: UserId,
        sensor: SensorId,
        campaign: CampaignId,
        duration_ms: Millis,
    ) -> IqRequestInfo {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock().expect("iq lock");
        inner.next += 1;
        let info = IqRequestInfo {
            request_id: format!("iq-{:06}", inner.next),
            sensor_id: sensor,
            campaign_id: campaign.clone(),
            created_ms: now,
            capture_until_ms: now + duration_ms,
            expires_ms: now + duration_ms + self.ttl_ms,
        };
        inner.by_campaign.insert(campaign, info.request_id.clone());
        inner.requests.insert(
            info.request_id.clone(),
            IqRequest {
                info: info.clone(),
                owner,
                messages: Vec::new(),
            },
        );
        info
    }

    /// Stages an IQ envelope if it belongs to a live request. Returns
    /// whether it was kept.
    pub fn accept(&self, env: &Envelope) -> bool {
        if env.is_psd() {
            return false;
        }
        let mut inner = self.inner.lock().expect("iq lock");
        let Some(id) = inner.by_campaign.get(&env.campaign_id).cloned() else {
            return false;
        };
        let Some(req) = inner.requests.get_mut(&id) else {
            return false;
        };
        if req.info.sensor_id != env.sensor_id {
            return false;
        }
        match env.to_iq() {
            Ok(msg) => {
                req.messages.push(msg);
                true
            }
            Err(e) => {
                log::warn!("dropping undecodable IQ envelope for {id}: {e}");
                false
            }
        }
    }

    pub fn get(&self, request_id: &str, who: Option<&UserId>) -> Result<IqRequest> {
        self.purge_expired();
        let inner = self.inner.lock().expect("iq lock");
        let req = inner
            .requests
            .get(request_id)
            .ok_or_else(|| Error::NotFound(format!("IQ request {request_id}")))?;
        if who != Some(&req.owner) {
            return Err(Error::PermissionDenied("IQ data is owner-only".into()));
        }
        Ok(req.clone())
    }

    /// Deletes requests past their TTL; returns how many.
    pub fn purge_expired(&self) -> usize {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock().expect("iq lock");
        let before = inner.requests.len();
        inner.requests.retain(|_, r| r.info.expires_ms > now);
        let live: Vec<String> = inner.requests.keys().cloned().collect();
        inner.by_campaign.retain(|_, id| live.contains(id));
        before - inner.requests.len()
    }
}
