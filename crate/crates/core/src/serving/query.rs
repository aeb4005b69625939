//! Query specs and their URL query-string form.
//!
//! `sensor=s-1&t0=..&t1=..&f0=..&f1=..&tRes=60000&fRes=100000&fn=avg`;
//! times in ms UTC, frequencies in Hz. Ranges are half-open.

use serde::{Deserialize, Serialize};

use crate::aggregate::{AggFn, Range};
use crate::clock::Millis;
use crate::{Error, Result, SensorId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Aggregated,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub sensor: SensorId,
    pub range: Range,
    pub t_res_ms: Millis,
    pub f_res_hz: u64,
    pub func: AggFn,
    pub mode: Mode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    sensor: String,
    t0: Millis,
    t1: Millis,
    f0: f64,
    f1: f64,
    #[serde(rename = "tRes")]
    t_res: Option<Millis>,
    #[serde(rename = "fRes")]
    f_res: Option<f64>,
    #[serde(rename = "fn")]
    func: Option<String>,
    mode: Option<Mode>,
}

impl QuerySpec {
    pub fn from_query(query: &str) -> Result<Self> {
        let p: Params = serde_urlencoded::from_str(query).map_err(Error::parse)?;
        let f_res = p.f_res.unwrap_or(100_000.0);
        if !(f_res >= 1.0 && f_res.fract() == 0.0 && f_res <= u64::MAX as f64) {
            return Err(Error::invalid("fRes must be a whole number of Hz"));
        }
        let spec = Self {
            sensor: SensorId::new(p.sensor),
            range: Range {
                t0_ms: p.t0,
                t1_ms: p.t1,
                f0_hz: p.f0,
                f1_hz: p.f1,
            },
            t_res_ms: p.t_res.unwrap_or(60_000),
            f_res_hz: f_res as u64,
            func: p.func.as_deref().unwrap_or("avg").parse()?,
            mode: p.mode.unwrap_or_default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_query(&self) -> String {
        let func = match self.func {
            AggFn::Avg => "avg",
            AggFn::Max => "max",
        };
        let mut pairs = vec![
            ("sensor", self.sensor.to_string()),
            ("t0", self.range.t0_ms.to_string()),
            ("t1", self.range.t1_ms.to_string()),
            ("f0", self.range.f0_hz.to_string()),
            ("f1", self.range.f1_hz.to_string()),
            ("tRes", self.t_res_ms.to_string()),
            ("fRes", self.f_res_hz.to_string()),
            ("fn", func.to_owned()),
        ];
        if self.mode == Mode::Raw {
            pairs.push(("mode", "raw".to_owned()));
        }
        serde_urlencoded::to_string(pairs).expect("string pairs encode")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor.as_str().is_empty() {
            return Err(Error::invalid("sensor is required"));
        }
        if !(self.range.f0_hz.is_finite() && self.range.f1_hz.is_finite()) {
            return Err(Error::invalid("frequencies must be finite"));
        }
        self.range.validate()?;
        if self.t_res_ms <= 0 || self.f_res_hz == 0 {
            return Err(Error::invalid("resolutions must be positive"));
        }
        Ok(())
    }
}
