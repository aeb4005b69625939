//! Campaign lifecycle and command fanout.
//!
//! Starting a campaign publishes `set-band`, `set-strategy`,
//! `set-sample-rate` and `set-pipeline` to every target and waits for the
//! matching acks. Listener threads only record acks and presence; all
//! campaign state changes happen on the caller's thread.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::broker::Transport;
use super::cmd_topic;
use super::command::{Ack, AckStatus, Command, StatusMessage, Verb};
use super::registry::Registry;
use crate::clock::{Millis, SharedClock};
use crate::sensor::{Band, HopStrategy, IqCodec, Pipeline, SensorConfig};
use crate::{CampaignId, Error, Result, SensorId};

pub const DEFAULT_ACK_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignState {
    Created,
    Running,
    Stopped,
}

/// What an administrator submits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    #[serde(default)]
    pub name: String,
    pub band: Band,
    #[serde(default)]
    pub strategy: HopStrategy,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codec: Option<IqCodec>,
    #[serde(default)]
    pub target_sensors: Vec<SensorId>,
    /// Auto-stop after this long once running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime_ms: Option<Millis>,
}

fn default_rate() -> f64 {
    crate::scene::DEFAULT_SAMPLE_RATE_HZ
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::invalid("sample_rate must be > 0"));
        }
        if matches!(self.lifetime_ms, Some(l) if l <= 0) {
            return Err(Error::invalid("lifetime_ms must be > 0"));
        }
        Ok(())
    }

    fn verbs(&self) -> [Verb; 4] {
        [
            Verb::SetBand {
                lo_hz: self.band.lo_hz,
                hi_hz: self.band.hi_hz,
            },
            Verb::SetStrategy {
                strategy: self.strategy,
            },
            Verb::SetSampleRate {
                sample_rate_hz: self.sample_rate,
            },
            Verb::SetPipeline {
                pipeline: self.pipeline,
                codec: self.codec,
            },
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FanoutReport {
    pub acked: Vec<SensorId>,
    /// Sensors that answered with a negative ack, with the first reason.
    pub rejected: Vec<(SensorId, String)>,
    /// Registered sensors that did not answer in time.
    pub unreachable: Vec<SensorId>,
    /// Targets missing from the registry.
    pub unknown: Vec<SensorId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: CampaignId,
    #[serde(flatten)]
    pub spec: CampaignSpec,
    pub state: CampaignState,
    pub created_at: Millis,
    pub started_at: Option<Millis>,
    pub stopped_at: Option<Millis>,
    pub report: Option<FanoutReport>,
}

#[derive(Default)]
struct Inbox {
    acks: HashMap<String, Ack>,
    effective: HashMap<SensorId, SensorConfig>,
}

pub struct CampaignManager {
    transport: Arc<dyn Transport>,
    registry: Arc<Registry>,
    clock: SharedClock,
    ack_timeout: Duration,
    campaigns: Mutex<BTreeMap<CampaignId, Campaign>>,
    next_id: Mutex<u64>,
    next_cmd: AtomicU64,
    inbox: Arc<(Mutex<Inbox>, Condvar)>,
}

impl CampaignManager {
    /// Subscribes to ack and status topics and starts the listener threads.
    pub fn new(
        transport: Arc<dyn Transport>,
        registry: Arc<Registry>,
        clock: SharedClock,
    ) -> Result<Self> {
        let inbox: Arc<(Mutex<Inbox>, Condvar)> = Arc::default();
        let acks = transport.subscribe("control/+/ack")?;
        let sink = inbox.clone();
        thread::spawn(move || {
            for m in acks {
                match Ack::parse(&m.payload) {
                    Ok(ack) => {
                        let (lock, cv) = &*sink;
                        let mut inbox = lock.lock().expect("inbox lock");
                        if ack.status == AckStatus::Ok {
                            inbox
                                .effective
                                .insert(ack.sensor_id.clone(), ack.config.clone());
                        }
                        inbox.acks.insert(ack.command_id.clone(), ack);
                        cv.notify_all();
                    }
                    Err(e) => log::warn!("bad ack on {}: {e}", m.topic),
                }
            }
        });
        let status = transport.subscribe("control/+/status")?;
        let reg = registry.clone();
        thread::spawn(move || {
            for m in status {
                match StatusMessage::parse(&m.payload) {
                    Ok(s) => {
                        if let Err(e) = reg.set_status(&s.sensor_id, s.status) {
                            log::debug!("status for unregistered sensor {}: {e}", s.sensor_id);
                        }
                    }
                    Err(e) => log::warn!("bad status on {}: {e}", m.topic),
                }
            }
        });
        Ok(Self {
            transport,
            registry,
            clock,
            ack_timeout: DEFAULT_ACK_TIMEOUT,
            campaigns: Mutex::default(),
            next_id: Mutex::new(1),
            next_cmd: AtomicU64::new(1),
            inbox,
        })
    }

    pub fn with_ack_timeout(mut self, timeout: Duration) -> Self {
        self.ack_timeout = timeout;
        self
    }

    pub fn create(&self, spec: CampaignSpec) -> Result<Campaign> {
        spec.validate()?;
        let id = {
            let mut n = self.next_id.lock().expect("id lock");
            let id = CampaignId::new(format!("c-{:06}", *n));
            *n += 1;
            id
        };
        let c = Campaign {
            campaign_id: id.clone(),
            spec,
            state: CampaignState::Created,
            created_at: self.clock.now_ms(),
            started_at: None,
            stopped_at: None,
            report: None,
        };
        self.campaigns
            .lock()
            .expect("campaign lock")
            .insert(id, c.clone());
        Ok(c)
    }

    pub fn get(&self, id: &CampaignId) -> Option<Campaign> {
        self.campaigns
            .lock()
            .expect("campaign lock")
            .get(id)
            .cloned()
    }

    pub fn list(&self) -> Vec<Campaign> {
        self.campaigns
            .lock()
            .expect("campaign lock")
            .values()
            .cloned()
            .collect()
    }

    /// Last config a sensor acknowledged.
    pub fn effective_config(&self, sensor: &SensorId) -> Option<SensorConfig> {
        let (lock, _) = &*self.inbox;
        lock.lock()
            .expect("inbox lock")
            .effective
            .get(sensor)
            .cloned()
    }

    fn transition(
        &self,
        id: &CampaignId,
        from: CampaignState,
        to: CampaignState,
    ) -> Result<Campaign> {
        let mut all = self.campaigns.lock().expect("campaign lock");
        let c = all
            .get_mut(id)
            .ok_or_else(|| Error::NotFound(format!("campaign {id}")))?;
        if c.state != from {
            return Err(Error::InvalidState(format!(
                "campaign {id} is {:?}, expected {from:?}",
                c.state
            )));
        }
        c.state = to;
        let now = self.clock.now_ms();
        match to {
            CampaignState::Running => c.started_at = Some(now),
            CampaignState::Stopped => c.stopped_at = Some(now),
            CampaignState::Created => {}
        }
        Ok(c.clone())
    }

    /// Fans the campaign out to its targets. The campaign runs even if some
    /// targets fail; the report says which.
    pub fn start(&self, id: &CampaignId) -> Result<FanoutReport> {
        let c = self.transition(id, CampaignState::Created, CampaignState::Running)?;
        let verbs = c.spec.verbs();
        let report = self.fanout(&c.campaign_id, &c.spec.target_sensors, &verbs);
        if let Some(c) = self.campaigns.lock().expect("campaign lock").get_mut(id) {
            c.report = Some(report.clone());
        }
        Ok(report)
    }

    /// Sends `stop` to every target, reverting them to the default sweep.
    pub fn stop(&self, id: &CampaignId) -> Result<FanoutReport> {
        let c = self.transition(id, CampaignState::Running, CampaignState::Stopped)?;
        Ok(self.fanout(&c.campaign_id, &c.spec.target_sensors, &[Verb::Stop]))
    }

    /// Stops running campaigns whose lifetime has elapsed; returns their ids.
    pub fn tick(&self) -> Vec<CampaignId> {
        let now = self.clock.now_ms();
        let due: Vec<CampaignId> = self
            .campaigns
            .lock()
            .expect("campaign lock")
            .values()
            .filter(|c| {
                c.state == CampaignState::Running
                    && matches!((c.started_at, c.spec.lifetime_ms), (Some(s), Some(l)) if now >= s + l)
            })
            .map(|c| c.campaign_id.clone())
            .collect();
        due.into_iter().filter(|id| self.stop(id).is_ok()).collect()
    }

    fn next_command(&self) -> u64 {
        self.next_cmd.fetch_add(1, Ordering::Relaxed)
    }

    fn fanout(&self, campaign: &CampaignId, targets: &[SensorId], verbs: &[Verb]) -> FanoutReport {
        let mut report = FanoutReport::default();
        let mut pending: Vec<(SensorId, Vec<String>)> = Vec::new();
        for sensor in targets {
            if !self.registry.contains(sensor) {
                report.unknown.push(sensor.clone());
                continue;
            }
            let mut ids = Vec::new();
            for verb in verbs {
                let cmd_id = format!("{campaign}/{sensor}/{}", self.next_command());
                let cmd = Command::new(cmd_id.clone(), campaign.clone(), verb.clone());
                if let Err(e) = self
                    .transport
                    .publish(&cmd_topic(sensor), &cmd.to_payload())
                {
                    log::warn!("publish to {sensor} failed: {e}");
                }
                ids.push(cmd_id);
            }
            pending.push((sensor.clone(), ids));
        }

        let deadline = Instant::now() + self.ack_timeout;
        let (lock, cv) = &*self.inbox;
        let mut inbox = lock.lock().expect("inbox lock");
        loop {
            let done = pending
                .iter()
                .all(|(_, ids)| ids.iter().all(|id| inbox.acks.contains_key(id)));
            let now = Instant::now();
            if done || now >= deadline {
                break;
            }
            inbox = cv
                .wait_timeout(inbox, deadline - now)
                .expect("inbox lock")
                .0;
        }
        for (sensor, ids) in pending {
            let acks: Vec<Ack> = ids.iter().filter_map(|id| inbox.acks.remove(id)).collect();
            if let Some(bad) = acks.iter().find(|a| a.status == AckStatus::Rejected) {
                report
                    .rejected
                    .push((sensor, bad.reason.clone().unwrap_or_default()));
            } else if acks.len() == ids.len() {
                report.acked.push(sensor);
            } else {
                report.unreachable.push(sensor);
            }
        }
        report
    }
}
