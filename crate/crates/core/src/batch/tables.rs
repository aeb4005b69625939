//! Versioned aggregate tables.
//!
//! Each build writes a complete new version directory of sorted runs, one
//! per level, then swaps the `CURRENT` pointer and the in-memory view.
//! Readers keep whatever version they grabbed.
//!
//! ```text
//! tables/CURRENT                  "v-000003"
//! tables/v-000003/meta.json       {"version":3,"levels":[{"level":..,"horizon_ms":..}]}
//! tables/v-000003/60000_1000000.run
//!     {"sensor":"s-1","t":28333333,"f":400,"sum":..,"count":..,"max":..}
//! ```
//!
//! Run lines are sorted by `(sensor, t, f)`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::aggregate::{Acc, CellKey, CellMap, Level};
use crate::clock::Millis;
use crate::{Error, Result, SensorId};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelTable {
    pub cells: CellMap,
    /// Time buckets ending at or before this are complete.
    pub horizon_ms: Millis,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableSet {
    pub version: u64,
    pub levels: BTreeMap<Level, LevelTable>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    version: u64,
    levels: Vec<MetaLevel>,
}

#[derive(Serialize, Deserialize)]
struct MetaLevel {
    level: Level,
    horizon_ms: Millis,
}

#[derive(Serialize, Deserialize)]
struct RunLine {
    sensor: SensorId,
    t: i64,
    f: i64,
    sum: f64,
    count: u64,
    max: f64,
}

fn run_name(l: Level) -> String {
    format!("{}_{}.run", l.t_ms, l.f_hz)
}

fn version_name(v: u64) -> String {
    format!("v-{v:06}")
}

pub struct TableStore {
    dir: PathBuf,
    current: RwLock<Arc<TableSet>>,
}

impl TableStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let set = match fs::read_to_string(dir.join("CURRENT")) {
            Ok(name) => load_version(&dir.join(name.trim()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => TableSet::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            dir,
            current: RwLock::new(Arc::new(set)),
        })
    }

    pub fn snapshot(&self) -> Arc<TableSet> {
        self.current.read().expect("tables lock").clone()
    }

    /// Writes `levels` as the next version and makes it current.
    pub fn publish(&self, levels: BTreeMap<Level, LevelTable>) -> Result<Arc<TableSet>> {
        let version = self.snapshot().version + 1;
        let set = TableSet { version, levels };
        let vdir = self.dir.join(version_name(version));
        if vdir.exists() {
            fs::remove_dir_all(&vdir)?;
        }
        fs::create_dir_all(&vdir)?;
        for (level, table) in &set.levels {
            let mut w = BufWriter::new(fs::File::create(vdir.join(run_name(*level)))?);
            for (k, a) in &table.cells {
                let line = RunLine {
                    sensor: k.sensor.clone(),
                    t: k.t,
                    f: k.f,
                    sum: a.sum,
                    count: a.count,
                    max: a.max,
                };
                serde_json::to_writer(&mut w, &line).map_err(Error::parse)?;
                w.write_all(b"\n")?;
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        let meta = Meta {
            version,
            levels: set
                .levels
                .iter()
                .map(|(l, t)| MetaLevel {
                    level: *l,
                    horizon_ms: t.horizon_ms,
                })
                .collect(),
        };
        fs::write(
            vdir.join("meta.json"),
            serde_json::to_vec(&meta).expect("meta serializes"),
        )?;
        let tmp = self.dir.join("CURRENT.tmp");
        fs::write(&tmp, version_name(version))?;
        fs::rename(&tmp, self.dir.join("CURRENT"))?;
        let set = Arc::new(set);
        *self.current.write().expect("tables lock") = set.clone();
        self.prune(version)?;
        Ok(set)
    }

    /// Keeps the current and the previous version on disk.
    fn prune(&self, current: u64) -> Result<()> {
        for e in fs::read_dir(&self.dir)? {
            let path = e?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_owned();
            if let Some(v) = name.strip_prefix("v-").and_then(|v| v.parse::<u64>().ok()) {
                if v + 1 < current {
                    fs::remove_dir_all(&path)?;
                }
            }
        }
        Ok(())
    }

    /// Deletes every table; the next build starts from nothing.
    pub fn clear(&self) -> Result<()> {
        let mut cur = self.current.write().expect("tables lock");
        fs::remove_dir_all(&self.dir)?;
        fs::create_dir_all(&self.dir)?;
        *cur = Arc::new(TableSet::default());
        Ok(())
    }
}

fn load_version(vdir: &Path) -> Result<TableSet> {
    let meta: Meta =
        serde_json::from_slice(&fs::read(vdir.join("meta.json"))?).map_err(Error::parse)?;
    let mut levels = BTreeMap::new();
    for m in meta.levels {
        let mut cells = CellMap::new();
        let f = fs::File::open(vdir.join(run_name(m.level)))?;
        for line in BufReader::new(f).lines() {
            let r: RunLine = serde_json::from_str(&line?).map_err(Error::parse)?;
            cells.insert(
                CellKey {
                    sensor: r.sensor,
                    t: r.t,
                    f: r.f,
                },
                Acc {
                    sum: r.sum,
                    count: r.count,
                    max: r.max,
                },
            );
        }
        levels.insert(
            m.level,
            LevelTable {
                cells,
                horizon_ms: m.horizon_ms,
            },
        );
    }
    Ok(TableSet {
        version: meta.version,
        levels,
    })
}
