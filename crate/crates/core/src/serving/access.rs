//! Bearer-token authentication and per-sensor access rules.
//!
//! Owners see their sensors at any resolution. Everyone else is capped at
//! 60 s / 100 kHz; `restricted` sensors additionally require a valid token
//! and `private` ones are closed to non-owners.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::control::{SensorRecord, Visibility};
use crate::{Error, Result, UserId};

pub const PUBLIC_MIN_T_RES_MS: Millis = 60_000;
pub const PUBLIC_MIN_F_RES_HZ: u64 = 100_000;

/// Static token table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Auth {
    tokens: HashMap<String, UserId>,
}

impl Auth {
    pub fn new(pairs: impl IntoIterator<Item = (String, UserId)>) -> Self {
        Self {
            tokens: pairs.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, user: UserId) {
        self.tokens.insert(token.into(), user);
    }

    /// Resolves an `Authorization` header value. No header is anonymous; an
    /// unknown token is an error rather than silently anonymous.
    pub fn authenticate(&self, header: Option<&str>) -> Result<Option<UserId>> {
        let Some(h) = header else { return Ok(None) };
        let token = h
            .strip_prefix("Bearer ")
            .ok_or_else(|| Error::PermissionDenied("expected a bearer token".into()))?;
        self.tokens
            .get(token.trim())
            .cloned()
            .map(Some)
            .ok_or_else(|| Error::PermissionDenied("unknown token".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grant {
    Owner,
    Capped,
}

pub fn authorize_view(rec: &SensorRecord, who: Option<&UserId>) -> Result<Grant> {
    if who == Some(&rec.owner_id) {
        return Ok(Grant::Owner);
    }
    match (rec.visibility, who) {
        (Visibility::Public, _) | (Visibility::Restricted, Some(_)) => Ok(Grant::Capped),
        (Visibility::Restricted, None) => Err(Error::PermissionDenied(format!(
            "sensor {} is restricted to signed-in users",
            rec.sensor_id
        ))),
        (Visibility::Private, _) => Err(Error::PermissionDenied(format!(
            "sensor {} is private",
            rec.sensor_id
        ))),
    }
}

/// Raw and IQ data are owner-only regardless of visibility.
pub fn authorize_owner(rec: &SensorRecord, who: Option<&UserId>) -> Result<()> {
    if who == Some(&rec.owner_id) {
        Ok(())
    } else {
        Err(Error::PermissionDenied(format!(
            "only the owner of {} may access its raw data",
            rec.sensor_id
        )))
    }
}

/// Applied resolution for a requested one.
pub fn clamp(grant: Grant, t_res_ms: Millis, f_res_hz: u64) -> (Millis, u64) {
    match grant {
        Grant::Owner => (t_res_ms, f_res_hz),
        Grant::Capped => (
            t_res_ms.max(PUBLIC_MIN_T_RES_MS),
            f_res_hz.max(PUBLIC_MIN_F_RES_HZ),
        ),
    }
}
