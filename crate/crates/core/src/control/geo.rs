use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::derive_seed;
use crate::{Error, Result};

/// Mean Earth radius (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)) {
            return Err(Error::invalid(format!(
                "coordinates ({lat}, {lon}) out of range"
            )));
        }
        Ok(Self { lat, lon })
    }
}

pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 && lon > 0.0 {
        180.0
    } else {
        w
    }
}

/// Displaces `loc` uniformly inside a disc of `radius_km`, seeded by
/// `sensor_key` so the same sensor always gets the same public position.
///
/// Uses the small-angle planar approximation with a latitude-corrected
/// longitude step; the offset is shrunk if the great-circle distance ends up
/// past the radius.
pub fn obfuscate_location(loc: LatLon, radius_km: f64, sensor_key: &str) -> LatLon {
    if radius_km <= 0.0 {
        return loc;
    }
    let mut rng = ChaCha8Rng::from_seed(derive_seed("obfuscate", &[sensor_key.as_bytes()]));
    let r = radius_km * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    let lat_rad = loc.lat.to_radians();
    let cos_lat = lat_rad.cos().max(1e-6);
    let mut scale = 1.0;
    for _ in 0..8 {
        let dlat = (r * scale * theta.cos() / EARTH_RADIUS_KM).to_degrees();
        let dlon = (r * scale * theta.sin() / (EARTH_RADIUS_KM * cos_lat)).to_degrees();
        let out = LatLon {
            lat: (loc.lat + dlat).clamp(-90.0, 90.0),
            lon: wrap_lon(loc.lon + dlon),
        };
        let d = haversine_km(loc, out);
        if d <= radius_km {
            return out;
        }
        scale *= radius_km / d * (1.0 - 1e-9);
    }
    loc
}
