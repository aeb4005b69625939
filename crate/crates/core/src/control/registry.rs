use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::geo::{obfuscate_location, LatLon};
use crate::clock::Millis;
use crate::dsp::derive_seed;
use crate::{Error, Result, SensorId, UserId};

/// "A few kilometers".
pub const DEFAULT_OBFUSCATION_RADIUS_KM: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorStatus {
    Online,
    Offline,
}

/// Who may read a sensor's aggregated data.
///
/// `Restricted` means authenticated users only, at capped resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    #[default]
    Public,
    Restricted,
    Private,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub sensor_id: SensorId,
    pub owner_id: UserId,
    pub sensor_key: String,
    pub true_location: LatLon,
    pub public_location: LatLon,
    pub antenna_desc: String,
    pub status: SensorStatus,
    pub visibility: Visibility,
    pub registered_at: Millis,
}

/// The map-listing view of a sensor; never carries the true location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicSensor {
    pub sensor_id: SensorId,
    pub public_location: LatLon,
    pub antenna_desc: String,
    pub status: SensorStatus,
    pub visibility: Visibility,
    pub registered_at: Millis,
}

impl From<&SensorRecord> for PublicSensor {
    fn from(r: &SensorRecord) -> Self {
        Self {
            sensor_id: r.sensor_id.clone(),
            public_location: r.public_location,
            antenna_desc: r.antenna_desc.clone(),
            status: r.status,
            visibility: r.visibility,
            registered_at: r.registered_at,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Registration {
    pub owner_id: UserId,
    pub location: LatLon,
    #[serde(default)]
    pub antenna_desc: String,
    /// Stable hardware key; re-registering the same key returns the same
    /// sensor.
    #[serde(default)]
    pub sensor_key: Option<String>,
    #[serde(default)]
    pub visibility: Visibility,
}

#[derive(Default, Serialize, Deserialize)]
struct State {
    records: BTreeMap<SensorId, SensorRecord>,
    next: u64,
}

pub struct Registry {
    state: RwLock<State>,
    radius_km: f64,
    path: Option<PathBuf>,
}

impl Registry {
    pub fn in_memory(radius_km: f64) -> Self {
        Self {
            state: RwLock::new(State::default()),
            radius_km,
            path: None,
        }
    }

    /// Opens (or creates) a registry persisted as JSON at `path`.
    pub fn open(path: impl AsRef<Path>, radius_km: f64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let state = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(Error::parse)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            state: RwLock::new(state),
            radius_km,
            path: Some(path),
        })
    }

    pub fn radius_km(&self) -> f64 {
        self.radius_km
    }

    fn persist(&self, state: &State) -> Result<()> {
        if let Some(path) = &self.path {
            let tmp = path.with_extension("tmp");
            std::fs::write(
                &tmp,
                serde_json::to_vec_pretty(state).map_err(Error::parse)?,
            )?;
            std::fs::rename(tmp, path)?;
        }
        Ok(())
    }

    pub fn register(&self, reg: Registration, now: Millis) -> Result<SensorRecord> {
        let loc = LatLon::new(reg.location.lat, reg.location.lon)?;
        let mut st = self.state.write().expect("registry lock");
        if let Some(key) = &reg.sensor_key {
            if let Some(existing) = st.records.values().find(|r| &r.sensor_key == key) {
                if existing.owner_id != reg.owner_id {
                    return Err(Error::PermissionDenied(format!(
                        "sensor key {key:?} belongs to another owner"
                    )));
                }
                return Ok(existing.clone());
            }
        }
        let sensor_id = match &reg.sensor_key {
            Some(key) => {
                let h = derive_seed("sensor-id", &[key.as_bytes()]);
                SensorId::new(format!(
                    "s-{:02x}{:02x}{:02x}{:02x}{:02x}{:02x}",
                    h[0], h[1], h[2], h[3], h[4], h[5]
                ))
            }
            None => loop {
                st.next += 1;
                let id = SensorId::new(format!("s-{:06}", st.next));
                if !st.records.contains_key(&id) {
                    break id;
                }
            },
        };
        let sensor_key = reg.sensor_key.unwrap_or_else(|| sensor_id.to_string());
        let record = SensorRecord {
            public_location: obfuscate_location(loc, self.radius_km, &sensor_key),
            sensor_id: sensor_id.clone(),
            owner_id: reg.owner_id,
            sensor_key,
            true_location: loc,
            antenna_desc: reg.antenna_desc,
            status: SensorStatus::Offline,
            visibility: reg.visibility,
            registered_at: now,
        };
        st.records.insert(sensor_id, record.clone());
        self.persist(&st)?;
        Ok(record)
    }

    pub fn get(&self, id: &SensorId) -> Option<SensorRecord> {
        self.state
            .read()
            .expect("registry lock")
            .records
            .get(id)
            .cloned()
    }

    pub fn contains(&self, id: &SensorId) -> bool {
        self.state
            .read()
            .expect("registry lock")
            .records
            .contains_key(id)
    }

    pub fn set_status(&self, id: &SensorId, status: SensorStatus) -> Result<()> {
        let mut st = self.state.write().expect("registry lock");
        let r = st
            .records
            .get_mut(id)
            .ok_or_else(|| Error::NotFound(format!("sensor {id}")))?;
        if r.status != status {
            r.status = status;
            self.persist(&st)?;
        }
        Ok(())
    }

    pub fn set_visibility(&self, id: &SensorId, visibility: Visibility) -> Result<()> {
        let mut st = self.state.write().expect("registry lock");
        let r = st
            .records
            .get_mut(id)
            .ok_or_else(|| Error::NotFound(format!("sensor {id}")))?;
        r.visibility = visibility;
        self.persist(&st)?;
        Ok(())
    }

    pub fn list_public(&self) -> Vec<PublicSensor> {
        self.state
            .read()
            .expect("registry lock")
            .records
            .values()
            .map(PublicSensor::from)
            .collect()
    }

    /// Full records, true location included, of the sensors `owner` owns.
    pub fn list_owned(&self, owner: &UserId) -> Vec<SensorRecord> {
        self.state
            .read()
            .expect("registry lock")
            .records
            .values()
            .filter(|r| &r.owner_id == owner)
            .cloned()
            .collect()
    }
}
