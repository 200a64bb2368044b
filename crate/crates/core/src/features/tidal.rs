use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};

use super::{FeatureError, FeatureKind, FeatureValue};
use crate::portcall::{format_timestamp, hours_between, parse_timestamp};

pub const TIDAL_COLUMNS: [(&str, FeatureKind); 3] = [
    ("water_height_at_arrival", FeatureKind::Numeric),
    ("hours_since_last_high_water", FeatureKind::Numeric),
    ("hours_since_last_low_water", FeatureKind::Numeric),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TideSample {
    pub timestamp: DateTime<Utc>,
    pub sensor_id: String,
    pub water_height_m: f64,
}

#[derive(Debug, Clone, Default)]
struct SensorTrack {
    times: Vec<DateTime<Utc>>,
    heights: Vec<f64>,
    highs: Vec<DateTime<Utc>>,
    lows: Vec<DateTime<Utc>>,
}

impl SensorTrack {
    /// High and low waters: samples where the sign of the discrete
    /// derivative flips. On a plateau the first sample is the extremum.
    fn detect_extrema(&mut self) {
        let h = &self.heights;
        let d: Vec<f64> = h.windows(2).map(|w| w[1] - w[0]).collect();
        for i in 1..h.len().saturating_sub(1) {
            let incoming = d[i - 1];
            if incoming == 0.0 {
                continue;
            }
            let Some(next) = d[i..].iter().copied().find(|x| *x != 0.0) else {
                break;
            };
            if incoming > 0.0 && next < 0.0 {
                self.highs.push(self.times[i]);
            } else if incoming < 0.0 && next > 0.0 {
                self.lows.push(self.times[i]);
            }
        }
    }
}

/// Water-height samples for one or more sensors.
#[derive(Debug, Clone, Default)]
pub struct TideSeries {
    sensors: BTreeMap<String, SensorTrack>,
}

impl TideSeries {
    pub fn new(samples: impl IntoIterator<Item = TideSample>) -> Result<Self, FeatureError> {
        let mut sensors: BTreeMap<String, SensorTrack> = BTreeMap::new();
        for s in samples {
            let track = sensors.entry(s.sensor_id.clone()).or_default();
            if let Some(last) = track.times.last() {
                if s.timestamp <= *last {
                    return Err(FeatureError::Unsorted(format_timestamp(&s.timestamp)));
                }
            }
            track.times.push(s.timestamp);
            track.heights.push(s.water_height_m);
        }
        for track in sensors.values_mut() {
            track.detect_extrema();
        }
        Ok(Self { sensors })
    }

    /// CSV with header `timestamp,sensor_id,water_height_m`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: &str| FeatureError::Parse {
                line: i + 2,
                message: m.to_string(),
            };
            let timestamp = parse_timestamp(rec.get(0).unwrap_or("")).ok_or_else(|| bad("timestamp"))?;
            let sensor_id = rec.get(1).unwrap_or("").trim().to_string();
            let water_height_m = rec
                .get(2)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("water_height_m"))?;
            samples.push(TideSample {
                timestamp,
                sensor_id,
                water_height_m,
            });
        }
        Self::new(samples)
    }

    pub fn sensors(&self) -> impl Iterator<Item = &str> {
        self.sensors.keys().map(String::as_str)
    }

    pub fn high_waters(&self, sensor: &str) -> &[DateTime<Utc>] {
        self.sensors.get(sensor).map(|t| t.highs.as_slice()).unwrap_or(&[])
    }

    pub fn low_waters(&self, sensor: &str) -> &[DateTime<Utc>] {
        self.sensors.get(sensor).map(|t| t.lows.as_slice()).unwrap_or(&[])
    }
}

fn hours_since_last(events: &[DateTime<Utc>], at: DateTime<Utc>) -> FeatureValue {
    let idx = events.partition_point(|t| *t <= at);
    if idx == 0 {
        FeatureValue::Missing
    } else {
        FeatureValue::Num(hours_between(events[idx - 1], at))
    }
}

/// Interpolated height at arrival and hours since the previous high and low
/// water of `sensor`. All three are missing when arrival falls outside the
/// sensor's coverage.
pub fn tidal_features(arrival: DateTime<Utc>, tides: &TideSeries, sensor: &str) -> [FeatureValue; 3] {
    let missing = [FeatureValue::Missing, FeatureValue::Missing, FeatureValue::Missing];
    let Some(track) = tides.sensors.get(sensor) else {
        return missing;
    };
    let (Some(first), Some(last)) = (track.times.first(), track.times.last()) else {
        return missing;
    };
    if arrival < *first || arrival > *last {
        return missing;
    }
    let idx = track.times.partition_point(|t| *t <= arrival);
    let height = if track.times[idx - 1] == arrival {
        track.heights[idx - 1]
    } else {
        let (t0, t1) = (track.times[idx - 1], track.times[idx]);
        let (h0, h1) = (track.heights[idx - 1], track.heights[idx]);
        let w = hours_between(t0, arrival) / hours_between(t0, t1);
        h0 + w * (h1 - h0)
    };
    [
        FeatureValue::Num(height),
        hours_since_last(&track.highs, arrival),
        hours_since_last(&track.lows, arrival),
    ]
}
