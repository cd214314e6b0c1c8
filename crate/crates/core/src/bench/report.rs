use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "kb_size,method,accuracy,recall1,recall3,recall5,fwd_per_tok,lat_med,lat_p95";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub median: f64,
    pub p95: f64,
}

impl Latency {
    /// Median and nearest-rank 95th percentile; zero for no samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { median: 0.0, p95: 0.0 };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self { median, p95: s[rank - 1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    #[serde(rename = "1")]
    pub at1: f64,
    #[serde(rename = "3")]
    pub at3: f64,
    #[serde(rename = "5")]
    pub at5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub accuracy: f64,
    pub fwd_calls_per_token: f64,
    pub latency_ms: Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub kb_size: usize,
    pub recall: Recall,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub version: String,
    pub spec_echo: Value,
    pub seed: u64,
    pub tiers: Vec<TierReport>,
}

impl Report {
    pub fn tier(&self, kb_size: usize) -> Option<&TierReport> {
        self.tiers.iter().find(|t| t.kb_size == kb_size)
    }

    /// The same report with every latency zeroed, for comparing reruns.
    pub fn without_timings(&self) -> Report {
        let mut r = self.clone();
        for m in r.tiers.iter_mut().flat_map(|t| t.methods.iter_mut()) {
            m.latency_ms = Latency { median: 0.0, p95: 0.0 };
        }
        r
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

impl TierReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn accuracy(&self, name: &str) -> Option<f64> {
        self.method(name).map(|m| m.accuracy)
    }
}

fn fixed(x: f64) -> String {
    format!("{x:.4}")
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            let x = n.as_f64().unwrap_or(0.0);
            Number::from_str(&fixed(x)).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with every float written to four decimal places.
pub fn render_json(report: &Report) -> String {
    let value = serde_json::to_value(report).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&round_floats(value)).expect("value serializes");
    s.push('\n');
    s
}

/// One row per tier and method, floats to four decimal places.
pub fn render_csv(report: &Report) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for t in &report.tiers {
        for m in &t.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                t.kb_size,
                m.name,
                fixed(m.accuracy),
                fixed(t.recall.at1),
                fixed(t.recall.at3),
                fixed(t.recall.at5),
                fixed(m.fwd_calls_per_token),
                fixed(m.latency_ms.median),
                fixed(m.latency_ms.p95),
            );
        }
    }
    out
}

/// Writes `report` to `path`, as CSV when the extension is `csv` and as JSON
/// otherwise.
pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let text = if csv { render_csv(report) } else { render_json(report) };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
