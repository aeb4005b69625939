//! Runs simulated sensors against a scene file.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Parser, Subcommand};

use specmon_core::clock::{Clock, ScaledClock, SharedClock, SystemClock};
use specmon_core::control::{Broker, RemoteBroker, Transport};
use specmon_core::ingest::CollectorClient;
use specmon_core::scene::SceneFile;
use specmon_core::sensor::{estimate_output_rate, GainMeta, SensorAgent, SensorConfig};
use specmon_core::SensorId;

#[derive(Parser, Debug)]
#[command(name = "sensor", version, about = "Simulated spectrum sensor fleet")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Scan the scene and ship envelopes to a collector.
    Run {
        #[arg(long)]
        scene: PathBuf,
        /// Sensor config (TOML); defaults to the full-range sweep.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        collector: String,
        /// Control broker; without it the sensors ignore campaigns.
        #[arg(long)]
        broker: Option<String>,
        /// Registered sensor id; repeat for a fleet.
        #[arg(long = "id", required = true)]
        ids: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        antenna_gain_db: f64,
        /// Defaults to the scene file's front-end gain.
        #[arg(long)]
        frontend_gain_db: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        cable_loss_db: f64,
        /// Stop after this many seconds of sensor time.
        #[arg(long)]
        seconds: Option<f64>,
        /// Run sensor time this many times faster than wall time.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Print the PSD uplink rate of a config.
    Rate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> specmon_core::Result<SensorConfig> {
    match path {
        Some(p) => SensorConfig::load(p),
        None => Ok(SensorConfig::default()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> specmon_core::Result<()> {
    match cli.cmd {
        Cmd::Rate { config } => {
            let cfg = load_config(config.as_ref())?;
            let bps = estimate_output_rate(&cfg)?;
            println!("fft_size\tdwell_ms\trate_kbps");
            println!("{}\t{}\t{:.3}", cfg.fft_size, cfg.dwell_ms, bps / 1e3);
            Ok(())
        }
        Cmd::Run {
            scene,
            config,
            collector,
            broker,
            ids,
            antenna_gain_db,
            frontend_gain_db,
            cable_loss_db,
            seconds,
            speed,
        } => {
            let file = SceneFile::load(&scene)?;
            let cfg = load_config(config.as_ref())?;
            let gain = GainMeta {
                antenna_gain_db,
                frontend_gain_db: frontend_gain_db.unwrap_or(file.frontend.gain_db),
                cable_loss_db,
            };
            let clock: SharedClock = if speed == 1.0 {
                Arc::new(SystemClock)
            } else {
                Arc::new(ScaledClock::new(SystemClock.now_ms(), speed))
            };
            let transport: Arc<dyn Transport> = match broker {
                Some(addr) => Arc::new(RemoteBroker::connect(addr)?),
                None => Arc::new(Broker::new()),
            };
            let scene = Arc::new(file.scene);
            let stop = Arc::new(AtomicBool::new(false));
            let mut handles = Vec::new();
            for id in ids {
                let mut agent =
                    SensorAgent::new(SensorId::new(id), scene.clone(), cfg.clone(), gain)?;
                // Sequence numbers continue from wall time so restarts never
                // reuse one: each dwell takes at least 1 ms.
                agent.resume_seq(clock.now_ms().max(0) as u64);
                let client = CollectorClient::new(collector.clone());
                let (clock, transport, stop) = (clock.clone(), transport.clone(), stop.clone());
                handles.push(thread::spawn(move || {
                    agent.run(clock, transport, |env| client.send(env).map(|_| ()), stop)
                }));
            }
            match seconds {
                Some(s) => {
                    let until = clock.now_ms() + (s * 1000.0) as i64;
                    clock.sleep_until(until);
                }
                None => loop {
                    thread::sleep(Duration::from_secs(3600));
                },
            }
            stop.store(true, Ordering::Relaxed);
            for h in handles {
                match h.join() {
                    Ok(Ok(agent)) => log::info!("{} stopped after seq {}", agent.id(), agent.seq()),
                    Ok(Err(e)) => log::error!("sensor failed: {e}"),
                    Err(_) => log::error!("sensor thread panicked"),
                }
            }
            Ok(())
        }
    }
}
