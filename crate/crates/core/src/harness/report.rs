//! Structured, byte-reproducible reports.
//!
//! JSON output is pretty-printed with a fixed key order. Infinite PSNR is
//! written as the string `"inf"` and undefined values as `null`, in both JSON
//! and CSV (`inf` / empty cell).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A metric value that may be `+inf` (identical images) or undefined (empty masks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Finite(f64),
    PosInf,
    Undefined,
}

impl MetricValue {
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            MetricValue::Finite(v)
        } else if v == f64::INFINITY {
            MetricValue::PosInf
        } else {
            MetricValue::Undefined
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            MetricValue::Finite(v) => Some(v),
            MetricValue::PosInf => Some(f64::INFINITY),
            MetricValue::Undefined => None,
        }
    }

    pub fn csv_cell(&self) -> String {
        match self {
            MetricValue::Finite(v) => format!("{v}"),
            MetricValue::PosInf => "inf".into(),
            MetricValue::Undefined => String::new(),
        }
    }
}

impl From<f64> for MetricValue {
    fn from(v: f64) -> Self {
        Self::from_f64(v)
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Finite(v) => s.serialize_f64(*v),
            MetricValue::PosInf => s.serialize_str("inf"),
            MetricValue::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
            Null(()),
        }
        Ok(match Option::<Raw>::deserialize(d)? {
            Some(Raw::Num(v)) => MetricValue::Finite(v),
            Some(Raw::Str(s)) if s == "inf" => MetricValue::PosInf,
            Some(Raw::Str(s)) => return Err(serde::de::Error::custom(format!("bad metric value {s:?}"))),
            Some(Raw::Null(())) | None => MetricValue::Undefined,
        })
    }
}

/// One evaluated unit (usually a slice pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Aggregation group, e.g. `"T1"`, `"T1->T2"` or `"gaussian/severe"`.
    pub group: String,
    pub labels: BTreeMap<String, String>,
    pub values: BTreeMap<String, MetricValue>,
}

impl Row {
    pub fn new(group: impl Into<String>) -> Self {
        Self {
            group: group.into(),
            labels: BTreeMap::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn label(mut self, key: &str, value: impl ToString) -> Self {
        self.labels.insert(key.to_string(), value.to_string());
        self
    }

    pub fn value(mut self, key: &str, value: impl Into<MetricValue>) -> Self {
        self.values.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub group: String,
    pub metric: String,
    pub mean: MetricValue,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub std: MetricValue,
    pub count: usize,
    pub undefined: usize,
}

impl Aggregate {
    /// `"0.8657 ± 0.2900"`.
    pub fn mean_pm_std(&self) -> String {
        match (self.mean, self.std) {
            (MetricValue::Finite(m), MetricValue::Finite(s)) => format!("{m:.4} ± {s:.4}"),
            (m, s) => format!("{} ± {}", fmt_cell(m), fmt_cell(s)),
        }
    }
}

fn fmt_cell(v: MetricValue) -> String {
    match v {
        MetricValue::Finite(x) => format!("{x:.4}"),
        MetricValue::PosInf => "inf".into(),
        MetricValue::Undefined => "undefined".into(),
    }
}

/// Mean and sample standard deviation over defined values. Any `+inf`
/// makes the mean `+inf`; the spread is then 0 if every value is `+inf`
/// and undefined otherwise.
pub fn summarize(values: &[MetricValue]) -> (MetricValue, MetricValue, usize, usize) {
    let defined: Vec<f64> = values.iter().filter_map(MetricValue::as_f64).collect();
    let undefined = values.len() - defined.len();
    let n = defined.len();
    if n == 0 {
        return (MetricValue::Undefined, MetricValue::Undefined, 0, undefined);
    }
    let infinite = defined.iter().filter(|v| v.is_infinite()).count();
    if infinite > 0 {
        let std = if infinite == n {
            MetricValue::Finite(0.0)
        } else {
            MetricValue::Undefined
        };
        return (MetricValue::PosInf, std, n, undefined);
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (MetricValue::Finite(mean), MetricValue::Finite(std), n, undefined)
}

/// Aggregates per `(group, metric)`, groups in first-appearance order and
/// metrics in key order.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut groups: Vec<&str> = Vec::new();
    for r in rows {
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    let mut out = Vec::new();
    for g in groups {
        let in_group: Vec<&Row> = rows.iter().filter(|r| r.group == g).collect();
        let mut metrics: Vec<&String> = in_group.iter().flat_map(|r| r.values.keys()).collect();
        metrics.sort();
        metrics.dedup();
        for m in metrics {
            let vals: Vec<MetricValue> = in_group.iter().filter_map(|r| r.values.get(m).copied()).collect();
            let (mean, std, count, undefined) = summarize(&vals);
            out.push(Aggregate {
                group: g.to_string(),
                metric: m.clone(),
                mean,
                std,
                count,
                undefined,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_bytes(name: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            name: name.into(),
            sha256: sha256_hex(bytes),
        }
    }

    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::of_bytes(path.display().to_string(), &bytes))
    }

    pub fn of_values(name: impl Into<String>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::of_bytes(name, &bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

/// The report every run mode emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub kind: String,
    pub provenance: Provenance,
    /// Protocol choices worth recording next to the numbers.
    pub notes: BTreeMap<String, String>,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Mode-specific payload (severity grid, gradient checks, ...).
    pub extra: serde_json::Value,
}

impl MetricReport {
    pub fn new(kind: &str, provenance: Provenance, rows: Vec<Row>) -> Self {
        let aggregates = aggregate(&rows);
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            provenance,
            notes: BTreeMap::new(),
            rows,
            aggregates,
            extra: serde_json::Value::Null,
        }
    }

    pub fn note(mut self, key: &str, text: impl Into<String>) -> Self {
        self.notes.insert(key.to_string(), text.into());
        self
    }

    pub fn with_extra(mut self, extra: serde_json::Value) -> Self {
        self.extra = extra;
        self
    }

    pub fn aggregate_for(&self, group: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.group == group && a.metric == metric)
    }

    /// Recompute the aggregates from the rows and compare to 1e-12.
    pub fn verify(&self) -> Result<()> {
        let fresh = aggregate(&self.rows);
        if fresh.len() != self.aggregates.len() {
            return Err(Error::Invariant(format!(
                "{} aggregates stored, {} recomputed",
                self.aggregates.len(),
                fresh.len()
            )));
        }
        let close = |a: MetricValue, b: MetricValue| match (a, b) {
            (MetricValue::Finite(x), MetricValue::Finite(y)) => (x - y).abs() <= 1e-12 * x.abs().max(1.0),
            (x, y) => x == y,
        };
        for (s, f) in self.aggregates.iter().zip(&fresh) {
            if s.group != f.group
                || s.metric != f.metric
                || s.count != f.count
                || !close(s.mean, f.mean)
                || !close(s.std, f.std)
            {
                return Err(Error::Invariant(format!(
                    "aggregate {}/{} does not match its rows",
                    s.group, s.metric
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn rows_csv(&self) -> Result<String> {
        let mut label_keys: Vec<&String> = self.rows.iter().flat_map(|r| r.labels.keys()).collect();
        label_keys.sort();
        label_keys.dedup();
        let mut value_keys: Vec<&String> = self.rows.iter().flat_map(|r| r.values.keys()).collect();
        value_keys.sort();
        value_keys.dedup();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["group".to_string()];
        header.extend(label_keys.iter().map(|k| k.to_string()));
        header.extend(value_keys.iter().map(|k| k.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.group.clone()];
            rec.extend(label_keys.iter().map(|k| r.labels.get(*k).cloned().unwrap_or_default()));
            rec.extend(
                value_keys
                    .iter()
                    .map(|k| r.values.get(*k).map(MetricValue::csv_cell).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn aggregates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "metric", "mean", "std", "count", "undefined", "summary"])
            .map_err(csv_err)?;
        for a in &self.aggregates {
            w.write_record([
                a.group.clone(),
                a.metric.clone(),
                a.mean.csv_cell(),
                a.std.csv_cell(),
                a.count.to_string(),
                a.undefined.to_string(),
                a.mean_pm_std(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Verify, then write `<kind>_report.json` and/or `<kind>_rows.csv` +
    /// `<kind>_aggregates.csv` into `dir`. Returns the written paths.
    pub fn emit(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        self.verify()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, text: String| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            Ok(())
        };
        if format.json() {
            put(format!("{}_report.json", self.kind), self.to_json()?)?;
        }
        if format.csv() {
            put(format!("{}_rows.csv", self.kind), self.rows_csv()?)?;
            put(format!("{}_aggregates.csv", self.kind), self.aggregates_csv()?)?;
        }
        Ok(written)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Invariant(format!("csv encoding failed: {e}"))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::Param(format!("unknown format {other:?} (csv, json, both)"))),
        }
    }
}
