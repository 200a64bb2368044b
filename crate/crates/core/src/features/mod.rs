//! Feature construction: turns port calls plus external calendars and series
//! into a [`FeatureMatrix`].
//!
//! The base feature set is always present. Tidal, weather and congestion
//! columns are optional and omitted from the schema entirely when disabled.

mod base;
mod congestion;
mod tidal;
mod weather;

use std::io::Write;

use chrono::Datelike;
pub use chrono_tz::Tz;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::portcall::{turnaround_hours, Dataset, PortCall, TurnaroundError};

pub use base::{base_features, HolidayCalendar, BASE_COLUMNS, WEEKDAY_LABELS};
pub use congestion::{congestion_features, CONGESTION_COLUMNS};
pub use tidal::{tidal_features, TideSample, TideSeries, TIDAL_COLUMNS};
pub use weather::{weather_features, WeatherSample, WeatherSeries, WEATHER_COLUMNS};

/// Port timezone used for local-time features.
pub const DEFAULT_TIMEZONE: Tz = chrono_tz::Europe::Paris;

pub const TARGET_NAME: &str = "turnaround_hours";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Boolean,
}

/// A single cell. Booleans are stored as `Num(0.0)` / `Num(1.0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
    Missing,
}

impl FeatureValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FeatureValue::Cat(s) => Some(s),
            _ => None,
        }
    }

    pub fn flag(b: bool) -> Self {
        FeatureValue::Num(if b { 1.0 } else { 0.0 })
    }

    fn render(&self) -> String {
        match self {
            FeatureValue::Num(v) => v.to_string(),
            FeatureValue::Cat(s) => s.clone(),
            FeatureValue::Missing => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    target: String,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self, FeatureError> {
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if c.name == TARGET_NAME || !seen.insert(c.name.as_str()) {
                return Err(FeatureError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self {
            columns,
            target: TARGET_NAME.to_string(),
        })
    }

    pub fn for_toggles(toggles: &FeatureToggles) -> Self {
        let mut cols: Vec<Column> = Vec::new();
        let mut push = |spec: &[(&str, FeatureKind)]| {
            cols.extend(spec.iter().map(|(n, k)| Column {
                name: n.to_string(),
                kind: *k,
            }))
        };
        push(&BASE_COLUMNS);
        if toggles.tidal {
            push(&TIDAL_COLUMNS);
        }
        if toggles.weather {
            push(&WEATHER_COLUMNS);
        }
        if toggles.congestion {
            push(&CONGESTION_COLUMNS);
        }
        Self::new(cols).expect("static column names are unique")
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Checks that `row` has this schema's arity and per-column value kinds.
    pub fn check_row(&self, row: &[FeatureValue]) -> Result<(), FeatureError> {
        if row.len() != self.columns.len() {
            return Err(FeatureError::Arity {
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        for (col, v) in self.columns.iter().zip(row) {
            let ok = match (col.kind, v) {
                (_, FeatureValue::Missing) => true,
                (FeatureKind::Categorical, FeatureValue::Cat(_)) => true,
                (FeatureKind::Numeric | FeatureKind::Boolean, FeatureValue::Num(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(FeatureError::KindMismatch(col.name.clone()));
            }
        }
        Ok(())
    }
}

/// Aligned feature rows, target and per-row bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    schema: FeatureSchema,
    rows: Vec<Vec<FeatureValue>>,
    target: Vec<f64>,
    call_ids: Vec<String>,
    years: Vec<i32>,
}

impl FeatureMatrix {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<FeatureValue>>,
        target: Vec<f64>,
        call_ids: Vec<String>,
        years: Vec<i32>,
    ) -> Result<Self, FeatureError> {
        for row in &rows {
            schema.check_row(row)?;
        }
        let n = rows.len();
        if target.len() != n || call_ids.len() != n || years.len() != n {
            return Err(FeatureError::Length);
        }
        Ok(Self {
            schema,
            rows,
            target,
            call_ids,
            years,
        })
    }

    pub fn empty(schema: FeatureSchema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
            target: Vec::new(),
            call_ids: Vec::new(),
            years: Vec::new(),
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<FeatureValue>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[FeatureValue] {
        &self.rows[i]
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn call_ids(&self) -> &[String] {
        &self.call_ids
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Overwrites one target value. No validation: training rejects
    /// non-finite targets on its own.
    pub fn set_target(&mut self, row: usize, value: f64) {
        self.target[row] = value;
    }

    /// Categorical column values by name, `None` where missing.
    pub fn labels(&self, column: &str) -> Option<Vec<Option<&str>>> {
        let idx = self.schema.index_of(column)?;
        Some(self.rows.iter().map(|r| r[idx].as_cat()).collect())
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            call_ids: indices.iter().map(|&i| self.call_ids[i].clone()).collect(),
            years: indices.iter().map(|&i| self.years[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["call_id".to_string(), "year".to_string()];
        header.extend(self.schema.names().map(str::to_string));
        header.push(self.schema.target.clone());
        wtr.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.call_ids[i].clone(), self.years[i].to_string()];
            rec.extend(self.rows[i].iter().map(FeatureValue::render));
            rec.push(self.target[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn default_n() -> usize {
    10
}

fn default_m_days() -> i64 {
    30
}

/// Optional feature families. Only the base set is on by default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureToggles {
    #[serde(default)]
    pub tidal: bool,
    #[serde(default)]
    pub weather: bool,
    #[serde(default)]
    pub congestion: bool,
    /// Tide sensor to read; the lexicographically first sensor when absent.
    #[serde(default)]
    pub tide_sensor: Option<String>,
    #[serde(default = "default_n")]
    pub congestion_n: usize,
    #[serde(default = "default_m_days")]
    pub congestion_m_days: i64,
}

impl Default for FeatureToggles {
    fn default() -> Self {
        Self {
            tidal: false,
            weather: false,
            congestion: false,
            tide_sensor: None,
            congestion_n: default_n(),
            congestion_m_days: default_m_days(),
        }
    }
}

impl FeatureToggles {
    pub fn all() -> Self {
        Self {
            tidal: true,
            weather: true,
            congestion: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExternalData {
    pub tides: Option<TideSeries>,
    pub weather: Option<WeatherSeries>,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("call {0:?} has no arrival")]
    MissingArrival(String),
    #[error("call {call_id:?}: {source}")]
    Call {
        call_id: String,
        #[source]
        source: Box<FeatureError>,
    },
    #[error(transparent)]
    Turnaround(#[from] TurnaroundError),
    #[error("duplicate or reserved column name {0:?}")]
    DuplicateColumn(String),
    #[error("row has {found} values, schema has {expected} columns")]
    Arity { expected: usize, found: usize },
    #[error("value kind does not match column {0:?}")]
    KindMismatch(String),
    #[error("rows, target, ids and years differ in length")]
    Length,
    #[error("series timestamps must be strictly increasing (at {0})")]
    Unsorted(String),
    #[error("negative precipitation at {0}")]
    NegativePrecipitation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Builds one feature row for `call`. Congestion features look only at calls
/// in `history` that arrived strictly before `call`.
pub fn feature_row(
    call: &PortCall,
    calendar: &HolidayCalendar,
    extras: &ExternalData,
    toggles: &FeatureToggles,
    history: &Dataset,
    tz: Tz,
) -> Result<Vec<FeatureValue>, FeatureError> {
    let arrival = call
        .arrival
        .ok_or_else(|| FeatureError::MissingArrival(call.call_id.clone()))?;
    let mut row = base_features(call, calendar, tz)?;
    if toggles.tidal {
        match &extras.tides {
            Some(tides) => {
                let sensor = toggles
                    .tide_sensor
                    .clone()
                    .or_else(|| tides.sensors().next().map(str::to_string))
                    .unwrap_or_default();
                row.extend(tidal_features(arrival, tides, &sensor));
            }
            None => row.extend(std::iter::repeat_n(FeatureValue::Missing, TIDAL_COLUMNS.len())),
        }
    }
    if toggles.weather {
        match &extras.weather {
            Some(w) => row.extend(weather_features(arrival, w)),
            None => row.extend(std::iter::repeat_n(FeatureValue::Missing, WEATHER_COLUMNS.len())),
        }
    }
    if toggles.congestion {
        row.extend(congestion_features(
            call,
            history,
            toggles.congestion_n,
            toggles.congestion_m_days,
        ));
    }
    Ok(row)
}

/// Local calendar year of the call's arrival.
pub fn arrival_year(call: &PortCall, tz: Tz) -> Option<i32> {
    call.arrival.map(|a| a.with_timezone(&tz).year())
}

/// Builds the full matrix in dataset order. Row construction runs in
/// parallel; the output does not depend on the worker count.
pub fn assemble_matrix(
    dataset: &Dataset,
    calendar: &HolidayCalendar,
    extras: &ExternalData,
    toggles: &FeatureToggles,
    tz: Tz,
) -> Result<FeatureMatrix, FeatureError> {
    let schema = FeatureSchema::for_toggles(toggles);
    let built: Vec<Result<(Vec<FeatureValue>, f64, i32), FeatureError>> = dataset
        .calls()
        .par_iter()
        .map(|call| {
            let wrap = |e: FeatureError| FeatureError::Call {
                call_id: call.call_id.clone(),
                source: Box::new(e),
            };
            let row = feature_row(call, calendar, extras, toggles, dataset, tz).map_err(wrap)?;
            let target = turnaround_hours(call).map_err(|e| wrap(e.into()))?.value();
            let year = arrival_year(call, tz).expect("arrival checked by feature_row");
            Ok((row, target, year))
        })
        .collect();

    let mut matrix = FeatureMatrix::empty(schema);
    for (call, item) in dataset.calls().iter().zip(built) {
        let (row, target, year) = item?;
        matrix.rows.push(row);
        matrix.target.push(target);
        matrix.call_ids.push(call.call_id.clone());
        matrix.years.push(year);
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize_dataset, SynthConfig};

    #[test]
    fn base_schema_has_17_columns() {
        let s = FeatureSchema::for_toggles(&FeatureToggles::default());
        assert_eq!(s.len(), 17);
        assert!(s.index_of(TARGET_NAME).is_none());
        let all = FeatureSchema::for_toggles(&FeatureToggles::all());
        assert_eq!(all.len(), 17 + 3 + 6 + 3);
    }

    #[test]
    fn empty_dataset_gives_empty_matrix() {
        let m = assemble_matrix(
            &Dataset::empty(),
            &HolidayCalendar::default(),
            &ExternalData::default(),
            &FeatureToggles::default(),
            DEFAULT_TIMEZONE,
        )
        .unwrap();
        assert!(m.is_empty());
        assert_eq!(m.schema().len(), 17);
    }

    #[test]
    fn assembled_rows_follow_dataset_order() {
        let mut cfg = SynthConfig::default();
        cfg.calls_per_year = 20;
        cfg.n_years = 2;
        let d = synthesize_dataset(&cfg, 3).unwrap();
        let m = assemble_matrix(
            &d,
            &HolidayCalendar::default(),
            &ExternalData::default(),
            &FeatureToggles::all(),
            DEFAULT_TIMEZONE,
        )
        .unwrap();
        assert_eq!(m.n_rows(), d.len());
        for (id, call) in m.call_ids().iter().zip(d.calls()) {
            assert_eq!(id, &call.call_id);
        }
        // Missing external series are encoded as missing, not dropped.
        let idx = m.schema().index_of("water_height_at_arrival").unwrap();
        assert!(m.rows().iter().all(|r| r[idx] == FeatureValue::Missing));
    }

    #[test]
    fn matrix_rejects_bad_rows() {
        let schema = FeatureSchema::new(vec![Column {
            name: "x".into(),
            kind: FeatureKind::Numeric,
        }])
        .unwrap();
        let bad = FeatureMatrix::new(
            schema.clone(),
            vec![vec![FeatureValue::Cat("a".into())]],
            vec![1.0],
            vec!["a".into()],
            vec![2018],
        );
        assert!(matches!(bad, Err(FeatureError::KindMismatch(_))));
        let bad = FeatureMatrix::new(schema, vec![vec![FeatureValue::Num(1.0)]], vec![], vec![], vec![]);
        assert!(matches!(bad, Err(FeatureError::Length)));
    }
}
