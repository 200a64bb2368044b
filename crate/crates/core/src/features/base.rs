use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use chrono_tz::Tz;

use super::{FeatureError, FeatureKind, FeatureValue};
use crate::cleaning::NONE_LABEL;
use crate::portcall::{CargoOperation, PortCall};

use FeatureKind::{Boolean, Categorical, Numeric};

pub const BASE_COLUMNS: [(&str, FeatureKind); 17] = [
    ("cargo_type_u", Categorical),
    ("fiscal_cargo_type_u", Categorical),
    ("tonnage_u", Numeric),
    ("berth_u", Categorical),
    ("cargo_type_l", Categorical),
    ("fiscal_cargo_type_l", Categorical),
    ("tonnage_l", Numeric),
    ("berth_l", Categorical),
    ("day_of_entry", Categorical),
    ("hour_of_entry_round4", Categorical),
    ("holiday_m3", Boolean),
    ("holiday_m2", Boolean),
    ("holiday_m1", Boolean),
    ("holiday_on_entry", Boolean),
    ("holiday_p1", Boolean),
    ("holiday_p2", Boolean),
    ("holiday_p3", Boolean),
];

pub const WEEKDAY_LABELS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Set of local holiday dates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self {
            dates: dates.into_iter().collect(),
        }
    }

    /// One ISO date per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut dates = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| FeatureError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            dates.insert(d);
        }
        Ok(Self { dates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }

    pub fn dates(&self) -> impl Iterator<Item = &NaiveDate> {
        self.dates.iter()
    }

    pub fn shifted(&self, days: i64) -> Self {
        Self::new(self.dates.iter().map(|d| *d + Duration::days(days)))
    }
}

fn push_operation(row: &mut Vec<FeatureValue>, op: Option<&CargoOperation>) {
    let label = |s: Option<&String>| FeatureValue::Cat(s.cloned().unwrap_or_else(|| NONE_LABEL.to_string()));
    row.push(label(op.and_then(|o| o.cargo_type.as_ref())));
    row.push(label(op.and_then(|o| o.fiscal_cargo_type.as_ref())));
    row.push(FeatureValue::Num(op.and_then(|o| o.tonnage).unwrap_or(0.0)));
    row.push(label(op.and_then(|o| o.berth.as_ref())));
}

/// The 17 base features, in [`BASE_COLUMNS`] order.
pub fn base_features(
    call: &PortCall,
    calendar: &HolidayCalendar,
    tz: Tz,
) -> Result<Vec<FeatureValue>, FeatureError> {
    let arrival = call
        .arrival
        .ok_or_else(|| FeatureError::MissingArrival(call.call_id.clone()))?;
    let local = arrival.with_timezone(&tz);
    let mut row = Vec::with_capacity(BASE_COLUMNS.len());
    push_operation(&mut row, call.unload.as_ref());
    push_operation(&mut row, call.load.as_ref());
    row.push(FeatureValue::Cat(
        WEEKDAY_LABELS[local.weekday().num_days_from_monday() as usize].to_string(),
    ));
    row.push(FeatureValue::Cat((local.hour() / 4 * 4).to_string()));
    let day = local.date_naive();
    for offset in -3..=3 {
        row.push(FeatureValue::flag(calendar.contains(day + Duration::days(offset))));
    }
    Ok(row)
}
