//! A simulated sensor: scene front-end, pipelines, hop scheduler and the
//! command handler, with a paced run loop.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;

use super::config::{Pipeline, SensorConfig};
use super::iq::iq_pipeline;
use super::psd::{psd_pipeline, GainMeta};
use super::scheduler::ScanState;
use crate::clock::{Millis, SharedClock};
use crate::control::{
    ack_topic, apply_command, cmd_topic, status_topic, Ack, AckStatus, BrokerMessage, Command,
    SensorStatus, StatusMessage, Transport, Verb,
};
use crate::envelope::Envelope;
use crate::scene::{synthesize_block, FrontEnd, Scene};
use crate::{CampaignId, Result, SensorId};

pub struct SensorAgent {
    id: SensorId,
    scene: Arc<Scene>,
    gain_meta: GainMeta,
    config: SensorConfig,
    campaign: CampaignId,
    scan: ScanState,
    seq: u64,
}

impl SensorAgent {
    /// The receive chain applies `gain_meta.system_gain_db()` to scene
    /// samples and reports `gain_meta` with every measurement.
    pub fn new(
        id: SensorId,
        scene: Arc<Scene>,
        config: SensorConfig,
        gain_meta: GainMeta,
    ) -> Result<Self> {
        config.validate()?;
        let scan = config.scan_state()?;
        Ok(Self {
            id,
            scene,
            gain_meta,
            config,
            campaign: CampaignId::default_campaign(),
            scan,
            seq: 0,
        })
    }

    pub fn id(&self) -> &SensorId {
        &self.id
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn campaign(&self) -> &CampaignId {
        &self.campaign
    }

    pub fn scan(&self) -> &ScanState {
        &self.scan
    }

    /// Next sequence number to be emitted.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Continues numbering after a restart.
    pub fn resume_seq(&mut self, seq: u64) {
        self.seq = seq;
    }

    /// Captures one dwell at the next hop, starting at `t0`.
    pub fn step(&mut self, t0: Millis) -> Result<Envelope> {
        let hop = self.scan.next_hop();
        let block = synthesize_block(
            &self.scene,
            &self.id,
            hop,
            self.config.sample_rate,
            self.config.samples_per_dwell(),
            t0,
        )?;
        let block = FrontEnd {
            gain_db: self.gain_meta.system_gain_db(),
        }
        .apply(block);
        let env = match self.config.pipeline {
            Pipeline::Psd => {
                let mut seg = psd_pipeline(
                    &block,
                    self.config.fft_size,
                    self.config.n_avg,
                    self.config.window,
                )?;
                seg.campaign_id = self.campaign.clone();
                seg.dwell_ms = self.config.dwell_ms;
                seg.gain_meta = self.gain_meta;
                self.scan.update_burstiness(&seg)?;
                Envelope::from_segment(self.seq, &seg)
            }
            Pipeline::Iq => {
                let msg = iq_pipeline(&block, self.config.iq_codec, self.campaign.clone())?;
                Envelope::from_iq(self.seq, &msg, self.config.dwell_ms, self.gain_meta)
            }
        };
        self.seq += 1;
        Ok(env)
    }

    /// Applies a command. A rejected command leaves the config unchanged.
    pub fn handle_command(&mut self, cmd: &Command) -> Ack {
        let (status, reason) = match apply_command(&self.config, cmd) {
            Ok(next) => {
                if next.band != self.config.band || next.sample_rate != self.config.sample_rate {
                    match next.scan_state() {
                        Ok(s) => self.scan = s,
                        Err(e) => return self.ack(cmd, AckStatus::Rejected, Some(e.to_string())),
                    }
                }
                self.scan.strategy = next.strategy;
                self.config = next;
                self.campaign = match cmd.verb {
                    Verb::Stop => CampaignId::default_campaign(),
                    _ => cmd.campaign_id.clone(),
                };
                (AckStatus::Ok, None)
            }
            Err(e) => (AckStatus::Rejected, Some(e.to_string())),
        };
        self.ack(cmd, status, reason)
    }

    fn ack(&self, cmd: &Command, status: AckStatus, reason: Option<String>) -> Ack {
        Ack {
            command_id: cmd.command_id.clone(),
            sensor_id: self.id.clone(),
            status,
            reason,
            config: self.config.clone(),
        }
    }

    /// Handles every queued command and publishes the acks.
    pub fn drain_commands(&mut self, rx: &Receiver<BrokerMessage>, transport: &dyn Transport) {
        for m in rx.try_iter() {
            match Command::parse(&m.payload) {
                Ok(cmd) => {
                    let ack = self.handle_command(&cmd);
                    if let Err(e) = transport.publish(&ack_topic(&self.id), &ack.to_payload()) {
                        log::warn!("{}: ack publish failed: {e}", self.id);
                    }
                }
                Err(e) => log::warn!("{}: unparsable command: {e}", self.id),
            }
        }
    }

    pub fn announce(
        &self,
        transport: &dyn Transport,
        status: SensorStatus,
        now: Millis,
    ) -> Result<()> {
        let msg = StatusMessage {
            sensor_id: self.id.clone(),
            status,
            t_ms: now,
        };
        transport.publish(&status_topic(&self.id), &msg.to_payload())
    }

    /// Runs one dwell per `dwell_ms` until `stop` is set. Sink errors are
    /// logged and the measurement dropped; the sink owns retries.
    pub fn run(
        mut self,
        clock: SharedClock,
        transport: Arc<dyn Transport>,
        mut sink: impl FnMut(&Envelope) -> Result<()>,
        stop: Arc<AtomicBool>,
    ) -> Result<Self> {
        let commands = transport.subscribe(&cmd_topic(&self.id))?;
        self.announce(&*transport, SensorStatus::Online, clock.now_ms())?;
        let mut next = clock.now_ms();
        while !stop.load(Ordering::Relaxed) {
            clock.sleep_until(next);
            let t0 = clock.now_ms();
            self.drain_commands(&commands, &*transport);
            match self.step(t0) {
                Ok(env) => {
                    if let Err(e) = sink(&env) {
                        log::warn!("{}: dropped seq {}: {e}", self.id, env.seq);
                    }
                }
                Err(e) => log::error!("{}: capture failed: {e}", self.id),
            }
            next = t0 + self.config.dwell_ms;
        }
        self.announce(&*transport, SensorStatus::Offline, clock.now_ms())?;
        Ok(self)
    }
}
