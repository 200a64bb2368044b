//! Filling missing call timestamps from detected visits.
//!
//! A call missing its arrival or departure is matched against the visits of
//! the same vessel whose interval overlaps the declared window widened by the
//! tolerance on both sides. When only one timestamp is declared, the window
//! is that instant plus and minus the tolerance. Exactly one overlapping
//! visit fills the gap; anything else is reported and the call is left as is.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::PortVisit;
use crate::portcall::{Dataset, PortCall};

pub const DEFAULT_TOLERANCE_HOURS: f64 = 12.0;
pub const AIS_PROVENANCE: &str = "ais";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilledField {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub call_id: String,
    pub field: FilledField,
    pub value: DateTime<Utc>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UnresolvedReason {
    NoDeclaredTime,
    NoCandidate,
    Ambiguous { candidates: usize },
    /// The matching visit has no exit yet.
    VisitOngoing,
    /// The fill would put departure at or before arrival.
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unresolved {
    pub call_id: String,
    pub reason: UnresolvedReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconcileReport {
    pub fills: Vec<Fill>,
    pub unresolved: Vec<Unresolved>,
}

fn window(call: &PortCall, tol: Duration) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
    let lo = call.arrival.or(call.departure)?;
    let hi = call.departure.or(call.arrival)?;
    Some((lo - tol, hi + tol))
}

/// `id_map` translates call vessel ids to AIS vessel ids; unmapped ids are
/// used as they are.
pub fn reconcile(
    calls: &Dataset,
    visits: &[PortVisit],
    tolerance_hours: f64,
    id_map: &BTreeMap<String, String>,
) -> (Dataset, ReconcileReport) {
    let tol = Duration::nanoseconds((tolerance_hours.max(0.0) * 3.6e12).round() as i64);
    let mut by_vessel: BTreeMap<&str, Vec<&PortVisit>> = BTreeMap::new();
    for v in visits {
        by_vessel.entry(&v.vessel_id).or_default().push(v);
    }

    let mut report = ReconcileReport::default();
    let mut out = Vec::with_capacity(calls.len());
    for call in calls.calls() {
        let mut call = call.clone();
        if call.arrival.is_some() && call.departure.is_some() {
            out.push(call);
            continue;
        }
        let mut unresolved = |reason| {
            report.unresolved.push(Unresolved {
                call_id: call.call_id.clone(),
                reason,
            })
        };
        let Some((lo, hi)) = window(&call, tol) else {
            unresolved(UnresolvedReason::NoDeclaredTime);
            out.push(call);
            continue;
        };
        let vessel = id_map.get(&call.vessel_id).unwrap_or(&call.vessel_id);
        let candidates: Vec<&PortVisit> = by_vessel
            .get(vessel.as_str())
            .into_iter()
            .flatten()
            .copied()
            .filter(|v| v.entry <= hi && v.exit.is_none_or(|x| x >= lo))
            .collect();
        let visit = match candidates.as_slice() {
            [] => {
                unresolved(UnresolvedReason::NoCandidate);
                out.push(call);
                continue;
            }
            [v] => *v,
            many => {
                unresolved(UnresolvedReason::Ambiguous { candidates: many.len() });
                out.push(call);
                continue;
            }
        };
        let (field, value) = if call.arrival.is_none() {
            (FilledField::Arrival, Some(visit.entry))
        } else {
            (FilledField::Departure, visit.exit)
        };
        let Some(value) = value else {
            unresolved(UnresolvedReason::VisitOngoing);
            out.push(call);
            continue;
        };
        let (arr, dep) = match field {
            FilledField::Arrival => (value, call.departure.expect("one timestamp is declared")),
            FilledField::Departure => (call.arrival.expect("one timestamp is declared"), value),
        };
        if dep <= arr {
            unresolved(UnresolvedReason::Inconsistent);
            out.push(call);
            continue;
        }
        match field {
            FilledField::Arrival => call.arrival = Some(value),
            FilledField::Departure => call.departure = Some(value),
        }
        report.fills.push(Fill {
            call_id: call.call_id.clone(),
            field,
            value,
            provenance: AIS_PROVENANCE.into(),
        });
        out.push(call);
    }
    let dataset = Dataset::new(out, calls.provenance().clone()).expect("filling timestamps keeps calls valid");
    (dataset, report)
}
