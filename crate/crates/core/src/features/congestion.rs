use chrono::Duration;

use super::{FeatureKind, FeatureValue};
use crate::portcall::{turnaround_hours, Dataset, PortCall};

pub const CONGESTION_COLUMNS: [(&str, FeatureKind); 3] = [
    ("vessels_in_port", FeatureKind::Numeric),
    ("same_cargo_in_port", FeatureKind::Numeric),
    ("avg_turnaround_last_n", FeatureKind::Numeric),
];

fn shares_cargo(a: &PortCall, b: &PortCall) -> bool {
    let same = |x: Option<&str>, y: Option<&str>| x.is_some() && x == y;
    same(a.unload_cargo_type(), b.unload_cargo_type()) || same(a.load_cargo_type(), b.load_cargo_type())
}

/// Port occupancy at the call's arrival `t`, built only from calls that
/// arrived strictly before `t`:
/// - vessels still in port at `t` (open calls count as in port);
/// - of those, vessels sharing the unload or the load cargo type;
/// - mean turnaround of the `n` most recent departures in `[t - m_days, t]`.
pub fn congestion_features(call: &PortCall, dataset: &Dataset, n: usize, m_days: i64) -> [FeatureValue; 3] {
    let Some(t) = call.arrival else {
        return [FeatureValue::Missing, FeatureValue::Missing, FeatureValue::Missing];
    };
    let horizon = t - Duration::days(m_days);
    let mut in_port = 0usize;
    let mut same_cargo = 0usize;
    let mut departed: Vec<(chrono::DateTime<chrono::Utc>, f64)> = Vec::new();
    for other in dataset.calls() {
        let Some(arr) = other.arrival else { continue };
        if arr >= t || other.call_id == call.call_id {
            continue;
        }
        match other.departure {
            Some(dep) if dep <= t => {
                if dep >= horizon {
                    if let Ok(h) = turnaround_hours(other) {
                        departed.push((dep, h.value()));
                    }
                }
            }
            _ => {
                in_port += 1;
                if shares_cargo(call, other) {
                    same_cargo += 1;
                }
            }
        }
    }
    departed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let recent = &departed[..departed.len().min(n)];
    let avg = if recent.is_empty() {
        FeatureValue::Missing
    } else {
        FeatureValue::Num(recent.iter().map(|(_, h)| h).sum::<f64>() / recent.len() as f64)
    };
    [
        FeatureValue::Num(in_port as f64),
        FeatureValue::Num(same_cargo as f64),
        avg,
    ]
}
