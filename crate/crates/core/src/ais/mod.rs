//! Port entry and exit times from AIS position reports.

mod reconcile;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::portcall::{format_timestamp, parse_timestamp};

pub use reconcile::{reconcile, Fill, AIS_PROVENANCE, FilledField, ReconcileReport, Unresolved, UnresolvedReason, DEFAULT_TOLERANCE_HOURS};

#[derive(Debug, Error)]
pub enum AisError {
    #[error("geofence needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("geofence vertex {0} is not a finite lon/lat pair in range")]
    BadVertex(usize),
    #[error("geofence edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("position report out of range: {0}")]
    BadPosition(String),
    #[error("track is not sorted by time at fix {0}")]
    Unsorted(usize),
    #[error("track mixes vessels {0} and {1}")]
    MultipleVessels(String, String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    /// MMSI.
    pub vessel_id: String,
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub sog_knots: f64,
}

impl PositionReport {
    pub fn validate(&self) -> Result<(), AisError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && self.lat.abs() <= 90.0
            && self.lon.abs() <= 180.0
            && self.sog_knots >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(AisError::BadPosition(format!(
                "{} at {}: lat {}, lon {}, sog {}",
                self.vessel_id,
                format_timestamp(&self.timestamp),
                self.lat,
                self.lon,
                self.sog_knots
            )))
        }
    }
}

/// Simple polygon of `(lon, lat)` vertices, implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeofence")]
pub struct Geofence {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct RawGeofence {
    name: String,
    polygon: Vec<[f64; 2]>,
}

impl TryFrom<RawGeofence> for Geofence {
    type Error = AisError;

    fn try_from(raw: RawGeofence) -> Result<Self, AisError> {
        Geofence::new(raw.name, raw.polygon)
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let scale = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-12 * scale * scale
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

impl Geofence {
    /// A repeated closing vertex is accepted and dropped.
    pub fn new(name: impl Into<String>, mut polygon: Vec<[f64; 2]>) -> Result<Self, AisError> {
        if polygon.len() > 1 && polygon.first() == polygon.last() {
            polygon.pop();
        }
        for (i, v) in polygon.iter().enumerate() {
            if !(v[0].is_finite() && v[1].is_finite() && v[0].abs() <= 180.0 && v[1].abs() <= 90.0) {
                return Err(AisError::BadVertex(i));
            }
        }
        let n = polygon.len();
        if n < 3 || (0..n).any(|i| polygon[i] == polygon[(i + 1) % n]) {
            return Err(AisError::TooFewVertices(n));
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (polygon[i], polygon[(i + 1) % n]);
                let (c, d) = (polygon[j], polygon[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(AisError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            polygon,
        })
    }

    /// JSON `{"name": ..., "polygon": [[lon, lat], ...]}`.
    pub fn from_json(text: &str) -> Result<Self, AisError> {
        let raw: RawGeofence = serde_json::from_str(text)?;
        Self::new(raw.name, raw.polygon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AisError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Even-odd ray casting; points on an edge count as inside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let p = [lon, lat];
        let poly = &self.polygon;
        let n = poly.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > lat) != (b[1] > lat) {
                let x = a[0] + (lat - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if lon < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitParams {
    pub min_dwell_min: i64,
    pub max_gap_min: i64,
}

impl Default for VisitParams {
    fn default() -> Self {
        Self {
            min_dwell_min: 30,
            max_gap_min: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortVisit {
    pub vessel_id: String,
    pub entry: DateTime<Utc>,
    /// `None` while the vessel is still inside at the end of the track.
    pub exit: Option<DateTime<Utc>>,
    pub inside_fixes: usize,
}

struct Streak {
    entry: DateTime<Utc>,
    last: DateTime<Utc>,
    fixes: usize,
    /// Opened right after a data gap rather than after an outside fix.
    after_gap: bool,
    open_at_end: bool,
}

/// Visits of one vessel. The track must be sorted by time; exact repeats of
/// the previous fix are ignored.
pub fn detect_visits(track: &[PositionReport], fence: &Geofence, params: &VisitParams) -> Result<Vec<PortVisit>, AisError> {
    let Some(first) = track.first() else {
        return Ok(Vec::new());
    };
    for (i, w) in track.windows(2).enumerate() {
        if w[1].vessel_id != first.vessel_id {
            return Err(AisError::MultipleVessels(first.vessel_id.clone(), w[1].vessel_id.clone()));
        }
        if w[1].timestamp < w[0].timestamp {
            return Err(AisError::Unsorted(i + 1));
        }
    }
    let max_gap = Duration::minutes(params.max_gap_min);
    let min_dwell = Duration::minutes(params.min_dwell_min);

    let mut streaks: Vec<Streak> = Vec::new();
    let mut current: Option<Streak> = None;
    let mut prev: Option<&PositionReport> = None;
    for fix in track {
        fix.validate()?;
        if prev.is_some_and(|p| p.timestamp == fix.timestamp && p.lat == fix.lat && p.lon == fix.lon) {
            continue;
        }
        prev = Some(fix);
        if fence.contains(fix.lon, fix.lat) {
            match current.as_mut() {
                Some(s) if fix.timestamp - s.last > max_gap => {
                    streaks.push(current.take().expect("streak is open"));
                    current = Some(Streak {
                        entry: fix.timestamp,
                        last: fix.timestamp,
                        fixes: 1,
                        after_gap: true,
                        open_at_end: false,
                    });
                }
                Some(s) => {
                    s.last = fix.timestamp;
                    s.fixes += 1;
                }
                None => {
                    current = Some(Streak {
                        entry: fix.timestamp,
                        last: fix.timestamp,
                        fixes: 1,
                        after_gap: false,
                        open_at_end: false,
                    })
                }
            }
        } else if let Some(s) = current.take() {
            streaks.push(s);
        }
    }
    if let Some(mut s) = current {
        s.open_at_end = true;
        streaks.push(s);
    }

    // Merge visits separated by a short excursion outside.
    let mut merged: Vec<Streak> = Vec::new();
    for s in streaks {
        match merged.last_mut() {
            Some(prev) if !s.after_gap && s.entry - prev.last < min_dwell => {
                prev.last = s.last;
                prev.fixes += s.fixes;
                prev.open_at_end = s.open_at_end;
            }
            _ => merged.push(s),
        }
    }

    Ok(merged
        .into_iter()
        .filter(|s| s.last > s.entry && s.last - s.entry >= min_dwell)
        .map(|s| PortVisit {
            vessel_id: first.vessel_id.clone(),
            entry: s.entry,
            exit: (!s.open_at_end).then_some(s.last),
            inside_fixes: s.fixes,
        })
        .collect())
}

/// Splits reports by vessel, sorts each track by time and detects visits
/// per vessel in parallel. Output is ordered by vessel, then entry.
pub fn detect_all_visits(
    reports: &[PositionReport],
    fence: &Geofence,
    params: &VisitParams,
) -> Result<Vec<PortVisit>, AisError> {
    let mut tracks: BTreeMap<&str, Vec<PositionReport>> = BTreeMap::new();
    for r in reports {
        tracks.entry(&r.vessel_id).or_default().push(r.clone());
    }
    let per_vessel: Vec<Vec<PortVisit>> = tracks
        .into_par_iter()
        .map(|(_, mut track)| {
            track.sort_by_key(|r| r.timestamp);
            detect_visits(&track, fence, params)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_vessel.into_iter().flatten().collect())
}

pub const POSITION_HEADER: [&str; 5] = ["mmsi", "timestamp", "lat", "lon", "sog_knots"];
pub const VISIT_HEADER: [&str; 4] = ["vessel_id", "entry", "exit", "inside_fixes"];

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), AisError> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(AisError::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

/// AIS CSV `mmsi,timestamp,lat,lon,sog_knots`.
pub fn read_positions<R: Read>(reader: R) -> Result<Vec<PositionReport>, AisError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers()?, &POSITION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| AisError::Parse { line, message };
        let num = |i: usize| -> Result<f64, AisError> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| err(format!("bad {} {:?}", POSITION_HEADER[i], &rec[i])))
        };
        let report = PositionReport {
            vessel_id: rec[0].to_string(),
            timestamp: parse_timestamp(&rec[1]).ok_or_else(|| err(format!("bad timestamp {:?}", &rec[1])))?,
            lat: num(2)?,
            lon: num(3)?,
            sog_knots: num(4)?,
        };
        report.validate().map_err(|e| err(e.to_string()))?;
        out.push(report);
    }
    Ok(out)
}

pub fn load_positions(path: impl AsRef<Path>) -> Result<Vec<PositionReport>, AisError> {
    read_positions(std::fs::File::open(path)?)
}

pub fn write_visits<W: Write>(visits: &[PortVisit], writer: W) -> Result<(), AisError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VISIT_HEADER)?;
    for v in visits {
        w.write_record([
            v.vessel_id.clone(),
            format_timestamp(&v.entry),
            v.exit.as_ref().map(format_timestamp).unwrap_or_default(),
            v.inside_fixes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_visits<R: Read>(reader: R) -> Result<Vec<PortVisit>, AisError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers()?, &VISIT_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| AisError::Parse { line, message };
        let entry = parse_timestamp(&rec[1]).ok_or_else(|| err(format!("bad entry {:?}", &rec[1])))?;
        let exit = match &rec[2] {
            "" => None,
            s => Some(parse_timestamp(s).ok_or_else(|| err(format!("bad exit {s:?}")))?),
        };
        if exit.is_some_and(|x| x <= entry) {
            return Err(err("exit must be after entry".into()));
        }
        out.push(PortVisit {
            vessel_id: rec[0].to_string(),
            entry,
            exit,
            inside_fixes: rec[3].parse().map_err(|_| err(format!("bad inside_fixes {:?}", &rec[3])))?,
        });
    }
    Ok(out)
}
