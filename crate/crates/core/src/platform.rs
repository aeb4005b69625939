//! The assembled backend: queue, batch and speed layers, control plane and
//! the serving API, with the background workers that drive them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::batch::{BatchConfig, BatchLayer, BuildReport, CompactReport};
use crate::clock::{Millis, SharedClock};
use crate::control::{Broker, CampaignManager, Registry, Transport, DEFAULT_OBFUSCATION_RADIUS_KM};
use crate::envelope::Envelope;
use crate::ingest::{OffsetStore, Queue, QueueConfig};
use crate::serving::{
    Api, Auth, IqStore, StreamHub, DEFAULT_IQ_TTL_MS, DEFAULT_SUBSCRIBER_CAPACITY,
};
use crate::speed::{SpeedConfig, SpeedLayer, SpeedWorker, SPEED_CONSUMER};
use crate::{Error, Result, UserId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    pub data_dir: PathBuf,
    pub queue: QueueConfig,
    pub batch: BatchConfig,
    pub speed: SpeedConfig,
    pub obfuscation_radius_km: f64,
    /// Period of the compact-and-build cycle.
    pub batch_interval_ms: Millis,
    /// Each build recomputes this much history so late arrivals are folded in.
    pub batch_overlap_ms: Millis,
    /// Builds stop this far behind the clock.
    pub batch_settle_ms: Millis,
    pub iq_ttl_ms: Millis,
    pub subscriber_capacity: usize,
    pub worker_poll_ms: u64,
    /// Bearer token to user.
    pub tokens: BTreeMap<String, UserId>,
    /// Users who may run campaigns on sensors they do not own.
    pub admins: Vec<UserId>,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            queue: QueueConfig::default(),
            batch: BatchConfig::default(),
            speed: SpeedConfig::default(),
            obfuscation_radius_km: DEFAULT_OBFUSCATION_RADIUS_KM,
            batch_interval_ms: 60_000,
            batch_overlap_ms: 3_600_000,
            batch_settle_ms: 10_000,
            iq_ttl_ms: DEFAULT_IQ_TTL_MS,
            subscriber_capacity: DEFAULT_SUBSCRIBER_CAPACITY,
            worker_poll_ms: 50,
            tokens: BTreeMap::new(),
            admins: Vec::new(),
        }
    }
}

impl PlatformConfig {
    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: dir.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.batch.validate()?;
        self.speed.window.validate()?;
        if self.batch_interval_ms <= 0 || self.batch_overlap_ms < 0 || self.batch_settle_ms < 0 {
            return Err(Error::invalid(
                "batch interval must be positive, overlap and settle non-negative",
            ));
        }
        if self.subscriber_capacity == 0 {
            return Err(Error::invalid("subscriber capacity must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(Error::parse)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCycle {
    pub compact: CompactReport,
    pub build: BuildReport,
    pub from_ms: Millis,
    pub to_ms: Millis,
}

pub struct Platform {
    pub config: PlatformConfig,
    pub clock: SharedClock,
    pub queue: Arc<Queue>,
    pub broker: Arc<Broker>,
    pub auth: Arc<Auth>,
    pub api: Arc<Api>,
    last_build_to: Mutex<Option<Millis>>,
    stop: Arc<AtomicBool>,
    worker: Mutex<Option<SpeedWorker>>,
    threads: Mutex<Vec<thread::JoinHandle<()>>>,
}

impl Platform {
    /// Opens every store under `config.data_dir`. Background work starts
    /// with [`Platform::start`].
    pub fn open(config: PlatformConfig, clock: SharedClock) -> Result<Arc<Self>> {
        config.validate()?;
        let dir = &config.data_dir;
        std::fs::create_dir_all(dir)?;
        let queue = Arc::new(Queue::open(dir.join("queue"), config.queue, clock.clone())?);
        let batch = Arc::new(BatchLayer::open(dir.join("batch"), config.batch.clone())?);
        let speed = Arc::new(SpeedLayer::new(config.speed, clock.clone())?);
        let registry = Arc::new(Registry::open(
            dir.join("registry.json"),
            config.obfuscation_radius_km,
        )?);
        let broker = Arc::new(Broker::new());
        let transport: Arc<dyn Transport> = broker.clone();
        let campaigns = Arc::new(CampaignManager::new(
            transport,
            registry.clone(),
            clock.clone(),
        )?);
        let api = Arc::new(Api {
            registry,
            batch,
            speed,
            hub: Arc::new(StreamHub::new(config.subscriber_capacity)),
            iq: Arc::new(IqStore::new(config.iq_ttl_ms, clock.clone())),
            campaigns,
        });
        let auth = Arc::new(Auth::new(config.tokens.clone()));
        Ok(Arc::new(Self {
            config,
            clock,
            queue,
            broker,
            auth,
            api,
            last_build_to: Mutex::new(None),
            stop: Arc::new(AtomicBool::new(false)),
            worker: Mutex::new(None),
            threads: Mutex::new(Vec::new()),
        }))
    }

    /// Starts the speed worker, the batch scheduler and housekeeping.
    pub fn start(self: &Arc<Self>) -> Result<()> {
        self.start_speed()?;
        let me = self.clone();
        let batch = thread::spawn(move || {
            while !me.stop.load(Ordering::Relaxed) {
                if let Err(e) = me.run_batch_cycle() {
                    log::error!("batch cycle failed: {e}");
                }
                me.sleep_interruptible(me.config.batch_interval_ms);
            }
        });
        let me = self.clone();
        let house = thread::spawn(move || {
            while !me.stop.load(Ordering::Relaxed) {
                me.api.tick();
                if let Err(e) = me.queue.enforce_retention() {
                    log::error!("queue retention failed: {e}");
                }
                me.sleep_interruptible(1_000);
            }
        });
        self.threads.lock().expect("threads").extend([batch, house]);
        Ok(())
    }

    /// Starts only the speed worker; batch cycles are then up to the caller.
    pub fn start_speed(&self) -> Result<()> {
        let mut slot = self.worker.lock().expect("worker");
        if slot.is_some() {
            return Ok(());
        }
        let offsets = OffsetStore::open(self.queue.dir(), SPEED_CONSUMER)?;
        let hub = self.api.hub.clone();
        let iq = self.api.iq.clone();
        *slot = Some(SpeedWorker::spawn(
            self.api.speed.clone(),
            self.queue.clone(),
            offsets,
            vec![Arc::new(move |w| hub.publish(w))],
            Some(Arc::new(move |env: &Envelope| {
                if !iq.accept(env) {
                    log::debug!("unrequested IQ envelope from {}", env.sensor_id);
                }
            })),
            Duration::from_millis(self.config.worker_poll_ms),
        ));
        Ok(())
    }

    fn sleep_interruptible(&self, ms: Millis) {
        let until = self.clock.now_ms() + ms;
        while !self.stop.load(Ordering::Relaxed) && self.clock.now_ms() < until {
            self.clock
                .sleep_until((self.clock.now_ms() + 100).min(until));
        }
    }

    pub fn enqueue(&self, env: &Envelope) -> Result<(u32, u64)> {
        self.queue.enqueue(env)
    }

    /// Compacts the queue into the master dataset and rebuilds the tables
    /// from the last build minus the overlap up to the settled present.
    pub fn run_batch_cycle(&self) -> Result<BatchCycle> {
        let compact = self.api.batch.compact(&self.queue)?;
        let to = self.clock.now_ms() - self.config.batch_settle_ms;
        let mut last = self.last_build_to.lock().expect("build marker");
        let from = match *last {
            Some(t) => t - self.config.batch_overlap_ms,
            None => self.earliest_master_time().unwrap_or(to),
        };
        let build = self.api.batch.build(from, to)?;
        *last = Some(to);
        Ok(BatchCycle {
            compact,
            build,
            from_ms: from,
            to_ms: to,
        })
    }

    fn earliest_master_time(&self) -> Option<Millis> {
        self.api.batch.with_master(|m| m.earliest_t0())
    }

    /// Stops background work and commits consumer offsets.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.lock().expect("worker").take() {
            w.stop();
        }
        for h in self.threads.lock().expect("threads").drain(..) {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tables_take_defaults() {
        let c =
            PlatformConfig::parse("[queue]\npartitions = 4\n[speed.window]\nlateness_ms = 500\n")
                .unwrap();
        assert_eq!(c.queue.partitions, 4);
        assert_eq!(c.queue.log, crate::ingest::LogConfig::default());
        assert_eq!(c.speed.window.lateness_ms, 500);
        assert_eq!(
            c.speed.window.width_ms,
            SpeedConfig::default().window.width_ms
        );
        assert_eq!(c.batch, BatchConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PlatformConfig::parse("batch_intervall_ms = 5").is_err());
    }
}
