//! Port-call domain types, CSV ingestion and turnaround computation.
//!
//! A [`PortCall`] carries at most one unloading and one loading
//! [`CargoOperation`]. Multi-commodity calls are expected to be flattened
//! upstream to their dominant-tonnage cargo type.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact, ordered header of the port-call CSV format.
pub const CSV_HEADER: [&str; 12] = [
    "call_id",
    "vessel_id",
    "arrival",
    "departure",
    "unload_cargo_type",
    "unload_fiscal_cargo_type",
    "unload_tonnage",
    "unload_berth",
    "load_cargo_type",
    "load_fiscal_cargo_type",
    "load_tonnage",
    "load_berth",
];

const NANOS_PER_HOUR: f64 = 3.6e12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CargoOperation {
    pub cargo_type: Option<String>,
    pub fiscal_cargo_type: Option<String>,
    /// Metric tons.
    pub tonnage: Option<f64>,
    pub berth: Option<String>,
}

impl CargoOperation {
    pub fn is_empty(&self) -> bool {
        self.cargo_type.is_none()
            && self.fiscal_cargo_type.is_none()
            && self.tonnage.is_none()
            && self.berth.is_none()
    }

    fn validate(&self) -> Result<(), RecordError> {
        if let Some(t) = self.tonnage {
            if !t.is_finite() {
                return Err(RecordError::NonFiniteTonnage);
            }
            if t < 0.0 {
                return Err(RecordError::NegativeTonnage(t));
            }
        }
        for label in [&self.cargo_type, &self.fiscal_cargo_type, &self.berth]
            .into_iter()
            .flatten()
        {
            if label.is_empty() || label.trim() != label {
                return Err(RecordError::BadLabel(label.clone()));
            }
        }
        Ok(())
    }
}

/// One vessel visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortCall {
    pub call_id: String,
    pub vessel_id: String,
    pub arrival: Option<DateTime<Utc>>,
    pub departure: Option<DateTime<Utc>>,
    pub unload: Option<CargoOperation>,
    pub load: Option<CargoOperation>,
}

impl PortCall {
    /// Unload plus load tonnage, absent tonnage counting as zero.
    pub fn total_tonnage(&self) -> f64 {
        [&self.unload, &self.load]
            .into_iter()
            .flatten()
            .filter_map(|op| op.tonnage)
            .sum()
    }

    pub fn unload_cargo_type(&self) -> Option<&str> {
        self.unload.as_ref().and_then(|op| op.cargo_type.as_deref())
    }

    pub fn load_cargo_type(&self) -> Option<&str> {
        self.load.as_ref().and_then(|op| op.cargo_type.as_deref())
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.call_id.trim().is_empty() {
            return Err(RecordError::MissingCallId);
        }
        if let (Some(a), Some(d)) = (self.arrival, self.departure) {
            if d <= a {
                return Err(RecordError::DepartureNotAfterArrival);
            }
        }
        for op in [&self.unload, &self.load].into_iter().flatten() {
            op.validate()?;
        }
        Ok(())
    }
}

/// Validation failure for a single record.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("missing call_id")]
    MissingCallId,
    #[error("malformed timestamp in column `{column}`: {value:?}")]
    MalformedTimestamp { column: &'static str, value: String },
    #[error("malformed tonnage in column `{column}`: {value:?}")]
    MalformedTonnage { column: &'static str, value: String },
    #[error("negative tonnage {0}")]
    NegativeTonnage(f64),
    #[error("non-finite tonnage")]
    NonFiniteTonnage,
    #[error("label {0:?} is empty or not trimmed")]
    BadLabel(String),
    #[error("departure is not after arrival")]
    DepartureNotAfterArrival,
    #[error("duplicate call_id {0:?}")]
    DuplicateCallId(String),
    #[error("expected {expected} columns, found {found}")]
    Arity { expected: usize, found: usize },
}

/// A record-level error located in the source file.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("line {line}: {message}")]
pub struct RowError {
    pub line: u64,
    pub call_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("call {call_id:?}: {source}")]
    Record {
        call_id: String,
        #[source]
        source: RecordError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    pub ingested_at: Option<DateTime<Utc>>,
}

/// Ordered, validated collection of port calls with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    calls: Vec<PortCall>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(calls: Vec<PortCall>, provenance: Provenance) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(calls.len());
        for call in &calls {
            call.validate().map_err(|source| DatasetError::Record {
                call_id: call.call_id.clone(),
                source,
            })?;
            if !seen.insert(call.call_id.as_str()) {
                return Err(DatasetError::Record {
                    call_id: call.call_id.clone(),
                    source: RecordError::DuplicateCallId(call.call_id.clone()),
                });
            }
        }
        Ok(Self { calls, provenance })
    }

    pub fn empty() -> Self {
        Self {
            calls: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn calls(&self) -> &[PortCall] {
        &self.calls
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn into_calls(self) -> Vec<PortCall> {
        self.calls
    }

    /// Keeps the calls for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&PortCall) -> bool) -> Self {
        Self {
            calls: self.calls.iter().filter(|c| keep(c)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Abort on the first bad row.
    #[default]
    Strict,
    /// Skip bad rows and report them.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    pub errors: Vec<RowError>,
}

pub fn parse_dataset(path: impl AsRef<Path>, mode: ParseMode) -> Result<ParseOutcome, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut outcome = read_dataset(file, mode)?;
    outcome.dataset.provenance = Provenance {
        source: path.display().to_string(),
        ingested_at: Some(Utc::now()),
    };
    Ok(outcome)
}

pub fn read_dataset<R: Read>(reader: R, mode: ParseMode) -> Result<ParseOutcome, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(DatasetError::Header {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut calls = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let call_id = record.get(0).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        let result = parse_record(&record).and_then(|call| {
            if seen.contains(&call.call_id) {
                Err(RecordError::DuplicateCallId(call.call_id))
            } else {
                Ok(call)
            }
        });
        match result {
            Ok(call) => {
                seen.insert(call.call_id.clone());
                calls.push(call);
            }
            Err(e) => {
                let err = RowError {
                    line,
                    call_id,
                    message: e.to_string(),
                };
                match mode {
                    ParseMode::Strict => return Err(err.into()),
                    ParseMode::Lenient => errors.push(err),
                }
            }
        }
    }
    let dataset = Dataset::new(calls, Provenance::default())?;
    Ok(ParseOutcome { dataset, errors })
}

fn cell(record: &csv::StringRecord, idx: usize) -> Option<String> {
    record
        .get(idx)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn parse_record(record: &csv::StringRecord) -> Result<PortCall, RecordError> {
    if record.len() != CSV_HEADER.len() {
        return Err(RecordError::Arity {
            expected: CSV_HEADER.len(),
            found: record.len(),
        });
    }
    let ts = |idx: usize| -> Result<Option<DateTime<Utc>>, RecordError> {
        cell(record, idx)
            .map(|v| {
                parse_timestamp(&v).ok_or(RecordError::MalformedTimestamp {
                    column: CSV_HEADER[idx],
                    value: v,
                })
            })
            .transpose()
    };
    let op = |base: usize| -> Result<Option<CargoOperation>, RecordError> {
        let tonnage = cell(record, base + 2)
            .map(|v| {
                v.parse::<f64>().map_err(|_| RecordError::MalformedTonnage {
                    column: CSV_HEADER[base + 2],
                    value: v,
                })
            })
            .transpose()?;
        let op = CargoOperation {
            cargo_type: cell(record, base),
            fiscal_cargo_type: cell(record, base + 1),
            tonnage,
            berth: cell(record, base + 3),
        };
        Ok((!op.is_empty()).then_some(op))
    };
    let call = PortCall {
        call_id: cell(record, 0).ok_or(RecordError::MissingCallId)?,
        vessel_id: cell(record, 1).unwrap_or_default(),
        arrival: ts(2)?,
        departure: ts(3)?,
        unload: op(4)?,
        load: op(8)?,
    };
    call.validate()?;
    Ok(call)
}

/// Parses an ISO-8601 timestamp, normalizing to UTC.
///
/// Accepts RFC 3339 and the seconds-less form `2018-01-01T00:00Z`.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    let naive = s.strip_suffix('Z')?;
    NaiveDateTime::parse_from_str(naive, "%Y-%m-%dT%H:%M")
        .ok()
        .map(|n| n.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for call in dataset.calls() {
        let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
        row.push(call.call_id.clone());
        row.push(call.vessel_id.clone());
        row.push(call.arrival.as_ref().map(format_timestamp).unwrap_or_default());
        row.push(call.departure.as_ref().map(format_timestamp).unwrap_or_default());
        for op in [&call.unload, &call.load] {
            let op = op.clone().unwrap_or_default();
            row.push(op.cargo_type.unwrap_or_default());
            row.push(op.fiscal_cargo_type.unwrap_or_default());
            row.push(op.tonnage.map(|t| t.to_string()).unwrap_or_default());
            row.push(op.berth.unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, std::io::BufWriter::new(file))
}

/// Hours between arrival and departure.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TurnaroundHours(f64);

impl TurnaroundHours {
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value > 0.0).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for TurnaroundHours {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} h", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TurnaroundError {
    #[error("call {0:?} is open (no departure)")]
    OpenCall(String),
    #[error("call {0:?} has no arrival")]
    MissingArrival(String),
    #[error("call {0:?} has non-positive turnaround")]
    NonPositive(String),
}

/// Signed hours between two instants, without rounding.
pub fn hours_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    let d = to - from;
    match d.num_nanoseconds() {
        Some(ns) => ns as f64 / NANOS_PER_HOUR,
        None => d.num_milliseconds() as f64 / 3.6e6,
    }
}

/// `from` shifted by a fractional number of hours, rounded to the nanosecond.
pub fn add_hours(from: DateTime<Utc>, hours: f64) -> DateTime<Utc> {
    from + chrono::Duration::nanoseconds((hours * NANOS_PER_HOUR).round() as i64)
}

pub fn turnaround_hours(call: &PortCall) -> Result<TurnaroundHours, TurnaroundError> {
    let arrival = call
        .arrival
        .ok_or_else(|| TurnaroundError::MissingArrival(call.call_id.clone()))?;
    let departure = call
        .departure
        .ok_or_else(|| TurnaroundError::OpenCall(call.call_id.clone()))?;
    TurnaroundHours::new(hours_between(arrival, departure))
        .ok_or_else(|| TurnaroundError::NonPositive(call.call_id.clone()))
}
