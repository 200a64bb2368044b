use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, DurationRound, Utc};

use super::{FeatureError, FeatureKind, FeatureValue};
use crate::portcall::{format_timestamp, parse_timestamp};

/// Hours aggregated after arrival, arrival hour included.
pub const WINDOW_HOURS: i64 = 48;

pub const WEATHER_COLUMNS: [(&str, FeatureKind); 6] = [
    ("temperature_at_arrival", FeatureKind::Numeric),
    ("wind_at_arrival", FeatureKind::Numeric),
    ("precipitation_at_arrival", FeatureKind::Numeric),
    ("precip_sum_48h", FeatureKind::Numeric),
    ("wind_mean_48h", FeatureKind::Numeric),
    ("temperature_mean_48h", FeatureKind::Numeric),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherSample {
    pub temperature_c: f64,
    pub wind_speed_ms: f64,
    pub precipitation_mm: f64,
}

/// Hourly weather observations keyed by the start of the hour.
#[derive(Debug, Clone, Default)]
pub struct WeatherSeries {
    hours: BTreeMap<DateTime<Utc>, WeatherSample>,
}

impl WeatherSeries {
    pub fn new(samples: impl IntoIterator<Item = (DateTime<Utc>, WeatherSample)>) -> Result<Self, FeatureError> {
        let mut hours = BTreeMap::new();
        let mut last: Option<DateTime<Utc>> = None;
        for (t, s) in samples {
            if last.is_some_and(|l| t <= l) {
                return Err(FeatureError::Unsorted(format_timestamp(&t)));
            }
            if s.precipitation_mm < 0.0 {
                return Err(FeatureError::NegativePrecipitation(format_timestamp(&t)));
            }
            last = Some(t);
            hours.insert(t, s);
        }
        Ok(Self { hours })
    }

    /// CSV with header `hour,temperature_c,wind_speed_ms,precipitation_mm`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: &str| FeatureError::Parse {
                line: i + 2,
                message: m.to_string(),
            };
            let num = |k: usize, name: &str| -> Result<f64, FeatureError> {
                rec.get(k).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad(name))
            };
            let hour = parse_timestamp(rec.get(0).unwrap_or("")).ok_or_else(|| bad("hour"))?;
            samples.push((
                hour,
                WeatherSample {
                    temperature_c: num(1, "temperature_c")?,
                    wind_speed_ms: num(2, "wind_speed_ms")?,
                    precipitation_mm: num(3, "precipitation_mm")?,
                },
            ));
        }
        Self::new(samples)
    }

    pub fn at(&self, hour: DateTime<Utc>) -> Option<&WeatherSample> {
        self.hours.get(&hour)
    }
}

/// Conditions at the arrival hour and aggregates over the 48 hours that
/// start with it. A missing hour makes the affected values missing.
pub fn weather_features(arrival: DateTime<Utc>, weather: &WeatherSeries) -> [FeatureValue; 6] {
    let hour0 = arrival
        .duration_trunc(Duration::hours(1))
        .expect("hour truncation is in range");
    let mut out = [const { FeatureValue::Missing }; 6];
    if let Some(s) = weather.at(hour0) {
        out[0] = FeatureValue::Num(s.temperature_c);
        out[1] = FeatureValue::Num(s.wind_speed_ms);
        out[2] = FeatureValue::Num(s.precipitation_mm);
    }
    let window: Option<Vec<&WeatherSample>> = (0..WINDOW_HOURS)
        .map(|k| weather.at(hour0 + Duration::hours(k)))
        .collect();
    if let Some(window) = window {
        let n = window.len() as f64;
        out[3] = FeatureValue::Num(window.iter().map(|s| s.precipitation_mm).sum());
        out[4] = FeatureValue::Num(window.iter().map(|s| s.wind_speed_ms).sum::<f64>() / n);
        out[5] = FeatureValue::Num(window.iter().map(|s| s.temperature_c).sum::<f64>() / n);
    }
    out
}
