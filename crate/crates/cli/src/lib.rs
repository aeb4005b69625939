//! Shared helpers of the command-line tools: a small API client and the
//! occupancy plot renderer.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::de::DeserializeOwned;

use specmon_core::analytics::OccupancyMap;
use specmon_core::serving::{AggregatedResponse, QuerySpec};
use specmon_core::{Error, Result};

/// Blocking client for the HTTP API.
pub struct Client {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            token,
            agent,
        }
    }

    pub fn get<T: DeserializeOwned>(&self, path_and_query: &str) -> Result<T> {
        let mut req = self.agent.get(format!("{}{}", self.base, path_and_query));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.call().map_err(|e| Error::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Unavailable(e.to_string()))?;
        if status >= 400 {
            return Err(error_from_status(status, body));
        }
        serde_json::from_str(&body).map_err(Error::parse)
    }

    pub fn aggregated(&self, spec: &QuerySpec) -> Result<AggregatedResponse> {
        self.get(&format!("/api/v1/spectrum/aggregated?{}", spec.to_query()))
    }
}

fn error_from_status(status: u16, body: String) -> Error {
    let msg = serde_json::from_str::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| v.get("message").and_then(|m| m.as_str()).map(str::to_owned))
        .unwrap_or(body);
    match status {
        400 => Error::InvalidArgument(msg),
        403 => Error::PermissionDenied(msg),
        404 => Error::NotFound(msg),
        422 => Error::NoSuchView(msg),
        503 => Error::Unavailable(msg),
        _ => Error::Unavailable(format!("HTTP {status}: {msg}")),
    }
}

/// Renders the map as a heat image: time down, frequency across, black for
/// free, red for fully occupied, grey for unobserved.
pub fn render_occupancy(map: &OccupancyMap, path: impl AsRef<Path>, scale: u32) -> Result<()> {
    let s = scale.max(1);
    let (w, h) = (map.nf as u32 * s, map.nt as u32 * s);
    if w == 0 || h == 0 {
        return Err(Error::invalid("occupancy map is empty"));
    }
    let img = RgbImage::from_fn(w, h, |x, y| {
        let (fi, ti) = ((x / s) as usize, (y / s) as usize);
        match map.get(ti, fi) {
            None => Rgb([96, 96, 96]),
            Some(d) => {
                let v = (d.clamp(0.0, 1.0) * 255.0).round() as u8;
                Rgb([v, v / 4, 0])
            }
        }
    });
    img.save(path)
        .map_err(|e| Error::invalid(format!("cannot write plot: {e}")))
}
