use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use specmon_core::clock::SystemClock;
use specmon_core::control::serve_broker_tcp;
use specmon_core::ingest::serve_collector;
use specmon_core::platform::{Platform, PlatformConfig};

/// Spectrum monitoring backend: collector, broker, batch/speed layers and
/// the HTTP API in one process.
#[derive(Parser, Debug)]
#[command(name = "specmond", version)]
struct Args {
    /// Platform config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `data_dir` from the config.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    http: SocketAddr,
    /// Newline-delimited envelope collector.
    #[arg(long, default_value = "127.0.0.1:7070")]
    collector: SocketAddr,
    /// Line-protocol control broker.
    #[arg(long, default_value = "127.0.0.1:1883")]
    broker: SocketAddr,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => PlatformConfig::load(p)?,
        None => PlatformConfig::default(),
    };
    if let Some(d) = args.data_dir {
        cfg.data_dir = d;
    }
    let platform = Platform::open(cfg, Arc::new(SystemClock))?;
    platform.start()?;

    let collector = TcpListener::bind(args.collector)?;
    log::info!("collector on {}", collector.local_addr()?);
    serve_collector(platform.queue.clone(), collector);
    let broker = TcpListener::bind(args.broker)?;
    log::info!("broker on {}", broker.local_addr()?);
    serve_broker_tcp(platform.broker.clone(), broker);

    let http = tokio::net::TcpListener::bind(args.http).await?;
    log::info!("http on {}", http.local_addr()?);
    axum::serve(http, specmon_server::router(platform.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    log::info!("shutting down");
    tokio::task::spawn_blocking(move || platform.shutdown()).await?;
    Ok(())
}
