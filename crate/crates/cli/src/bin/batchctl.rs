//! Offline batch jobs over a platform data directory. Run with the daemon
//! stopped; the daemon schedules the same jobs itself.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use specmon_core::batch::BatchLayer;
use specmon_core::clock::SystemClock;
use specmon_core::ingest::Queue;
use specmon_core::platform::PlatformConfig;

#[derive(Parser, Debug)]
#[command(name = "batchctl", version, about = "Batch layer jobs")]
struct Cli {
    /// Platform config (TOML); its data_dir is used unless --data-dir is set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Compact the queue into the master dataset and rebuild [from, to).
    Run {
        /// ms UTC
        #[arg(long)]
        from: i64,
        /// ms UTC
        #[arg(long)]
        to: i64,
    },
    /// Re-read the whole retained queue into the master dataset.
    Replay,
    /// Print master and table status.
    Status,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> specmon_core::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PlatformConfig::load(p)?,
        None => PlatformConfig::default(),
    };
    if let Some(d) = cli.data_dir {
        cfg.data_dir = d;
    }
    let batch = BatchLayer::open(cfg.data_dir.join("batch"), cfg.batch.clone())?;
    let open_queue = || Queue::open(cfg.data_dir.join("queue"), cfg.queue, Arc::new(SystemClock));
    match cli.cmd {
        Cmd::Run { from, to } => {
            let queue = open_queue()?;
            let c = batch.compact(&queue)?;
            println!("appended\tduplicates\tskipped_iq");
            println!("{}\t{}\t{}", c.appended, c.duplicates, c.skipped_iq);
            let b = batch.build(from, to)?;
            println!("version\tsegments\tcells");
            println!("{}\t{}\t{}", b.version, b.segments, b.cells);
        }
        Cmd::Replay => {
            let queue = open_queue()?;
            batch.with_master(|m| m.reset_offsets(queue.partitions()))?;
            let c = batch.compact(&queue)?;
            println!("appended\tduplicates\tskipped_iq");
            println!("{}\t{}\t{}", c.appended, c.duplicates, c.skipped_iq);
        }
        Cmd::Status => {
            let set = batch.snapshot();
            println!("master_envelopes\t{}", batch.with_master(|m| m.len()));
            println!("table_version\t{}", set.version);
            println!("level\tcells\thorizon_ms");
            for (l, t) in &set.levels {
                println!("{l}\t{}\t{}", t.cells.len(), t.horizon_ms);
            }
        }
    }
    Ok(())
}
