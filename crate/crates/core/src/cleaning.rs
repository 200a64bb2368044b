//! Port-call filtering pipeline with a per-removal audit trail.
//!
//! Rules run in a fixed order:
//! 1. empty calls (no operation, or zero total tonnage);
//! 2. turnaround below `min_turnaround_hours`;
//! 3. turnaround above `median + outlier_sigma * std` of any of the call's
//!    cargo types, with stats computed once on the survivors of 1-2;
//! 4. (unload type, load type) combinations seen fewer than
//!    `min_combo_count` times among the survivors of 1-3.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::portcall::{turnaround_hours, Dataset, PortCall, TurnaroundError};

/// Label standing in for an absent operation or cargo type.
pub const NONE_LABEL: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    pub min_turnaround_hours: f64,
    pub outlier_sigma: f64,
    pub min_combo_count: usize,
    pub drop_empty: bool,
    pub drop_short: bool,
    pub drop_outliers: bool,
    pub drop_rare_combos: bool,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            min_turnaround_hours: 1.0,
            outlier_sigma: 2.0,
            min_combo_count: 5,
            drop_empty: true,
            drop_short: true,
            drop_outliers: true,
            drop_rare_combos: true,
        }
    }
}

impl CleaningRules {
    pub fn validate(&self) -> Result<(), CleaningError> {
        let ok = self.min_turnaround_hours > 0.0
            && self.outlier_sigma > 0.0
            && self.min_combo_count > 0;
        if ok {
            Ok(())
        } else {
            Err(CleaningError::InvalidRules)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyCall,
    ShortTurnaround,
    Outlier,
    RareCombination,
}

impl Rule {
    pub const ALL: [Rule; 4] = [
        Rule::EmptyCall,
        Rule::ShortTurnaround,
        Rule::Outlier,
        Rule::RareCombination,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub count: usize,
    pub median: f64,
    pub std: f64,
}

/// Per cargo-type turnaround statistics, pooled over both operation sides.
pub type CargoTypeStats = BTreeMap<String, TypeStats>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub call_id: String,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_size: usize,
    pub output_size: usize,
    pub removed_per_rule: BTreeMap<Rule, usize>,
    pub removals: Vec<Removal>,
}

impl CleaningReport {
    pub fn removed(&self) -> usize {
        self.removed_per_rule.values().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.input_size == self.output_size + self.removed() && self.removals.len() == self.removed()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CleaningError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset exhausted: every call was removed")]
    DatasetExhausted,
    #[error("cleaning thresholds must be positive")]
    InvalidRules,
    #[error(transparent)]
    Turnaround(#[from] TurnaroundError),
}

fn median_lower(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn stats_of(samples: &[(&PortCall, f64)]) -> CargoTypeStats {
    let mut by_type: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (call, hours) in samples {
        for label in [call.unload_cargo_type(), call.load_cargo_type()].into_iter().flatten() {
            by_type.entry(label.to_string()).or_default().push(*hours);
        }
    }
    by_type
        .into_iter()
        .map(|(label, mut v)| {
            v.sort_by(f64::total_cmp);
            let stats = TypeStats {
                count: v.len(),
                median: median_lower(&v),
                std: population_std(&v),
            };
            (label, stats)
        })
        .collect()
}

/// Turnaround stats per cargo type. A call contributes one sample to its
/// unload type and one to its load type. Median is the lower median, std the
/// population std.
pub fn cargo_type_stats(dataset: &Dataset) -> Result<CargoTypeStats, CleaningError> {
    if dataset.is_empty() {
        return Err(CleaningError::EmptyDataset);
    }
    let samples = with_turnaround(dataset.calls())?;
    Ok(stats_of(&samples))
}

fn with_turnaround(calls: &[PortCall]) -> Result<Vec<(&PortCall, f64)>, CleaningError> {
    calls
        .iter()
        .map(|c| Ok((c, turnaround_hours(c)?.value())))
        .collect()
}

/// `(unload type, load type)` with absent sides mapped to [`NONE_LABEL`].
pub fn combo_key(call: &PortCall) -> (String, String) {
    (
        call.unload_cargo_type().unwrap_or(NONE_LABEL).to_string(),
        call.load_cargo_type().unwrap_or(NONE_LABEL).to_string(),
    )
}

pub fn is_empty_call(call: &PortCall) -> bool {
    (call.unload.is_none() && call.load.is_none()) || call.total_tonnage() == 0.0
}

pub fn apply_filters(
    dataset: &Dataset,
    rules: &CleaningRules,
) -> Result<(Dataset, CleaningReport), CleaningError> {
    rules.validate()?;
    if dataset.is_empty() {
        return Err(CleaningError::EmptyDataset);
    }
    let samples = with_turnaround(dataset.calls())?;
    let mut verdict: Vec<Option<Rule>> = vec![None; samples.len()];

    for (i, (call, hours)) in samples.iter().enumerate() {
        if rules.drop_empty && is_empty_call(call) {
            verdict[i] = Some(Rule::EmptyCall);
        } else if rules.drop_short && *hours < rules.min_turnaround_hours {
            verdict[i] = Some(Rule::ShortTurnaround);
        }
    }

    if rules.drop_outliers {
        let survivors: Vec<(&PortCall, f64)> = samples
            .iter()
            .zip(&verdict)
            .filter(|(_, v)| v.is_none())
            .map(|(s, _)| *s)
            .collect();
        let stats = stats_of(&survivors);
        for (i, (call, hours)) in samples.iter().enumerate() {
            if verdict[i].is_some() {
                continue;
            }
            let outlier = [call.unload_cargo_type(), call.load_cargo_type()]
                .into_iter()
                .flatten()
                .any(|label| {
                    let s = &stats[label];
                    *hours > s.median + rules.outlier_sigma * s.std
                });
            if outlier {
                verdict[i] = Some(Rule::Outlier);
            }
        }
    }

    if rules.drop_rare_combos {
        let mut counts: HashMap<(String, String), usize> = HashMap::new();
        for ((call, _), v) in samples.iter().zip(&verdict) {
            if v.is_none() {
                *counts.entry(combo_key(call)).or_default() += 1;
            }
        }
        for (i, (call, _)) in samples.iter().enumerate() {
            if verdict[i].is_none() && counts[&combo_key(call)] < rules.min_combo_count {
                verdict[i] = Some(Rule::RareCombination);
            }
        }
    }

    let mut removed_per_rule: BTreeMap<Rule, usize> = Rule::ALL.iter().map(|r| (*r, 0)).collect();
    let mut removals = Vec::new();
    for ((call, _), v) in samples.iter().zip(&verdict) {
        if let Some(rule) = v {
            *removed_per_rule.get_mut(rule).expect("all rules present") += 1;
            removals.push(Removal {
                call_id: call.call_id.clone(),
                rule: *rule,
            });
        }
    }
    let mut keep = verdict.iter().map(Option::is_none);
    let cleaned = dataset.filtered(|_| keep.next().unwrap_or(false));
    if cleaned.is_empty() {
        return Err(CleaningError::DatasetExhausted);
    }
    let report = CleaningReport {
        input_size: dataset.len(),
        output_size: cleaned.len(),
        removed_per_rule,
        removals,
    };
    Ok((cleaned, report))
}
