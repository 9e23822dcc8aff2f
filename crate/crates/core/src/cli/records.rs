//! Experiment records and their JSON-lines persistence.
//!
//! Non-finite numbers are written as the strings `"inf"`, `"-inf"` and
//! `"nan"` since JSON has no literal for them. The timestamp is always the
//! last field, so the payload of a line is everything before it.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::lattice::Site;

pub mod json_f64 {
    use super::*;

    pub fn to_value(x: f64) -> Value {
        if x.is_finite() {
            Value::from(x)
        } else if x.is_nan() {
            Value::from("nan")
        } else if x > 0.0 {
            Value::from("inf")
        } else {
            Value::from("-inf")
        }
    }

    pub fn from_value(v: &Value) -> Option<f64> {
        match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => match s.as_str() {
                "inf" => Some(f64::INFINITY),
                "-inf" => Some(f64::NEG_INFINITY),
                "nan" => Some(f64::NAN),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_value(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v = Value::deserialize(d)?;
        from_value(&v).ok_or_else(|| serde::de::Error::custom(format!("not a number: {v}")))
    }
}

mod json_f64_opt {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        x.map(json_f64::to_value).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Value>::deserialize(d)? {
            None => Ok(None),
            Some(v) => json_f64::from_value(&v)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("not a number: {v}"))),
        }
    }
}

mod json_ci {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<(f64, f64)>, s: S) -> Result<S::Ok, S::Error> {
        x.map(|(a, b)| [json_f64::to_value(a), json_f64::to_value(b)]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<(f64, f64)>, D::Error> {
        match Option::<[Value; 2]>::deserialize(d)? {
            None => Ok(None),
            Some([a, b]) => match (json_f64::from_value(&a), json_f64::from_value(&b)) {
                (Some(a), Some(b)) => Ok(Some((a, b))),
                _ => Err(serde::de::Error::custom("bad interval")),
            },
        }
    }
}

/// Where on the experiment's grid a statistic was measured.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "json_f64_opt")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "json_f64_opt")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<Site>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub index: Option<u64>,
}

impl GridPoint {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn n(n: u64) -> Self {
        GridPoint { n: Some(n), ..Self::default() }
    }

    pub fn t(t: f64) -> Self {
        GridPoint { t: Some(t), ..Self::default() }
    }

    pub fn m(m: u64) -> Self {
        GridPoint { m: Some(m), ..Self::default() }
    }

    pub fn lambda(l: f64) -> Self {
        GridPoint {
            lambda: Some(l),
            ..Self::default()
        }
    }

    pub fn direction(d: Site) -> Self {
        GridPoint {
            direction: Some(d),
            ..Self::default()
        }
    }

    pub fn index(i: u64) -> Self {
        GridPoint {
            index: Some(i),
            ..Self::default()
        }
    }

    pub fn with_direction(mut self, d: Site) -> Self {
        self.direction = Some(d);
        self
    }

    pub fn with_lambda(mut self, l: f64) -> Self {
        self.lambda = Some(l);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub config_hash: String,
    pub d: usize,
    pub dist: String,
    pub seed: u64,
    pub grid: GridPoint,
    pub statistic: String,
    #[serde(with = "json_f64")]
    pub value: f64,
    #[serde(with = "json_f64_opt", default)]
    pub stderr: Option<f64>,
    #[serde(with = "json_ci", default)]
    pub ci: Option<(f64, f64)>,
    pub certified: bool,
    #[serde(default)]
    pub aux: BTreeMap<String, Value>,
    /// Milliseconds since the Unix epoch; not part of the payload.
    #[serde(default)]
    pub timestamp: u64,
}

impl ExperimentRecord {
    pub fn with_stderr(mut self, se: f64) -> Self {
        self.stderr = Some(se);
        self
    }

    pub fn with_ci(mut self, ci: (f64, f64)) -> Self {
        self.ci = Some(ci);
        self
    }

    pub fn uncertified_if(mut self, bad: bool) -> Self {
        if bad {
            self.certified = false;
        }
        self
    }

    pub fn aux<V: Into<Value>>(mut self, key: &str, v: V) -> Self {
        self.aux.insert(key.to_string(), v.into());
        self
    }

    pub fn aux_f64(self, key: &str, v: f64) -> Self {
        let v = json_f64::to_value(v);
        self.aux(key, v)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    /// The serialized record without its timestamp.
    pub fn payload(&self) -> String {
        let mut r = self.clone();
        r.timestamp = 0;
        let line = r.to_line();
        let cut = line.rfind(",\"timestamp\":").expect("timestamp is the last field");
        line[..cut].to_string()
    }

    pub fn stamp(&mut self) {
        self.timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
    }
}

/// Shared fields of every record of one run.
#[derive(Debug, Clone)]
pub struct RecordFactory {
    pub experiment: String,
    pub config_hash: String,
    pub d: usize,
    pub dist: String,
    pub seed: u64,
}

impl RecordFactory {
    pub fn record(&self, grid: GridPoint, statistic: &str, value: f64) -> ExperimentRecord {
        ExperimentRecord {
            experiment: self.experiment.clone(),
            config_hash: self.config_hash.clone(),
            d: self.d,
            dist: self.dist.clone(),
            seed: self.seed,
            grid,
            statistic: statistic.to_string(),
            value,
            stderr: None,
            ci: None,
            certified: true,
            aux: BTreeMap::new(),
            timestamp: 0,
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[ExperimentRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ExperimentRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}
