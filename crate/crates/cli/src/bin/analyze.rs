//! Occupancy, white-space and RSSI reports over the HTTP API.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use specmon_cli::{render_occupancy, Client};
use specmon_core::aggregate::{AggFn, Range};
use specmon_core::analytics::{
    calibrated_rssi, detect_whitespace, estimate_noise_floor_dbm, occupancy, CalibrationProfile,
    OccupancyMap, DEFAULT_THRESHOLD_MARGIN_DB, TV_BAND_HZ,
};
use specmon_core::sensor::PsdSegment;
use specmon_core::serving::{Mode, QuerySpec};
use specmon_core::SensorId;

#[derive(Parser, Debug)]
#[command(
    name = "analyze",
    version,
    about = "Spectrum analytics over the query API"
)]
struct Cli {
    #[arg(long, global = true, default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long, global = true, env = "SPECMON_TOKEN")]
    token: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Window {
    #[arg(long)]
    sensor: String,
    /// ms UTC
    #[arg(long)]
    t0: i64,
    /// ms UTC
    #[arg(long)]
    t1: i64,
    #[arg(long, default_value_t = TV_BAND_HZ.0)]
    f0: f64,
    #[arg(long, default_value_t = TV_BAND_HZ.1)]
    f1: f64,
}

#[derive(Args, Debug)]
struct OccArgs {
    #[command(flatten)]
    window: Window,
    #[arg(long, default_value_t = 60_000)]
    t_res: i64,
    #[arg(long, default_value_t = 1_000_000)]
    f_res: u64,
    /// Sub-cell level queried for max values; must tile the grid.
    #[arg(long, default_value_t = 5_000)]
    sub_t_res: i64,
    #[arg(long, default_value_t = 100_000)]
    sub_f_res: u64,
    /// Defaults to the median avg sub-cell plus 6 dB.
    #[arg(long)]
    threshold_dbm: Option<f64>,
    /// Write a PNG heat map.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Duty cycle per (time, frequency) bucket.
    Occupancy(OccArgs),
    /// Frequency ranges whose mean duty is at most --max-duty.
    Whitespace {
        #[command(flatten)]
        occ: OccArgs,
        #[arg(long, default_value_t = 0.0)]
        max_duty: f64,
    },
    /// Calibrated in-band power of every raw segment covering the band.
    /// Owner only.
    Rssi {
        #[command(flatten)]
        window: Window,
        /// Override the gains the sensor reported.
        #[arg(long)]
        system_gain_db: Option<f64>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn range(w: &Window) -> Range {
    Range {
        t0_ms: w.t0,
        t1_ms: w.t1,
        f0_hz: w.f0,
        f1_hz: w.f1,
    }
}

fn compute_occupancy(client: &Client, a: &OccArgs) -> specmon_core::Result<OccupancyMap> {
    let sensor = SensorId::new(a.window.sensor.clone());
    let spec = |func| QuerySpec {
        sensor: sensor.clone(),
        range: range(&a.window),
        t_res_ms: a.sub_t_res,
        f_res_hz: a.sub_f_res,
        func,
        mode: Mode::Aggregated,
    };
    let max = client.aggregated(&spec(AggFn::Max))?;
    if max.clamped {
        eprintln!(
            "note: sub-cells clamped to {} ms / {} Hz for this caller",
            max.t_res_ms, max.f_res_hz
        );
    }
    let threshold = match a.threshold_dbm {
        Some(t) => t,
        None => {
            let avg = client.aggregated(&spec(AggFn::Avg))?;
            estimate_noise_floor_dbm(&avg.cells)
                .map_or(f64::INFINITY, |n| n + DEFAULT_THRESHOLD_MARGIN_DB)
        }
    };
    let map = occupancy(
        &sensor,
        &max.cells,
        &range(&a.window),
        a.t_res,
        a.f_res,
        threshold,
    )?;
    if let Some(p) = &a.plot {
        render_occupancy(&map, p, 4)?;
    }
    Ok(map)
}

#[derive(Deserialize)]
struct RawResponse {
    segments: Vec<PsdSegment>,
}

fn run(cli: Cli) -> specmon_core::Result<()> {
    let client = Client::new(cli.server, cli.token);
    match cli.cmd {
        Cmd::Occupancy(a) => {
            let map = compute_occupancy(&client, &a)?;
            println!("# threshold_dbm {:.2}", map.threshold_dbm);
            println!("t_start_ms\tf_start_hz\tduty");
            for ti in 0..map.nt {
                for fi in 0..map.nf {
                    if let Some(d) = map.get(ti, fi) {
                        let t = map.t_start_ms + ti as i64 * map.t_res_ms;
                        println!("{t}\t{:.0}\t{d:.4}", map.f_bucket(fi).lo_hz);
                    }
                }
            }
        }
        Cmd::Whitespace { occ, max_duty } => {
            let map = compute_occupancy(&client, &occ)?;
            println!(
                "# threshold_dbm {:.2} max_duty {max_duty}",
                map.threshold_dbm
            );
            println!("lo_hz\thi_hz\twidth_hz");
            for r in detect_whitespace(&map, max_duty) {
                println!("{:.0}\t{:.0}\t{:.0}", r.lo_hz, r.hi_hz, r.hi_hz - r.lo_hz);
            }
        }
        Cmd::Rssi {
            window,
            system_gain_db,
        } => {
            let spec = QuerySpec {
                sensor: SensorId::new(window.sensor.clone()),
                range: range(&window),
                t_res_ms: 60_000,
                f_res_hz: 100_000,
                func: AggFn::Avg,
                mode: Mode::Raw,
            };
            let raw: RawResponse =
                client.get(&format!("/api/v1/spectrum/raw?{}", spec.to_query()))?;
            println!("t0_ms\tcenter_hz\trssi_dbm");
            for seg in raw.segments {
                if window.f0 < seg.window_lo() || window.f1 > seg.window_hi() {
                    continue;
                }
                let profile = match system_gain_db {
                    Some(g) => CalibrationProfile {
                        frontend_gain_db: g,
                        ..CalibrationProfile::default()
                    },
                    None => CalibrationProfile::from(seg.gain_meta),
                };
                let r = calibrated_rssi(&seg, (window.f0, window.f1), &profile)?;
                println!("{}\t{:.0}\t{r:.2}", seg.t0, seg.center_freq);
            }
        }
    }
    Ok(())
}
