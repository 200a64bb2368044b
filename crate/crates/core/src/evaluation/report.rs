use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{metrics_at, EvalError, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "U")]
    Unload,
    #[serde(rename = "L")]
    Load,
}

impl Side {
    pub fn code(self) -> &'static str {
        match self {
            Side::Unload => "U",
            Side::Load => "L",
        }
    }

    /// Feature column holding this side's cargo type.
    pub fn column(self) -> &'static str {
        match self {
            Side::Unload => "cargo_type_u",
            Side::Load => "cargo_type_l",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Side::Unload => "Unloading",
            Side::Load => "Loading",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub cargo_type: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub side: Side,
    /// Every cargo type seen on this side, most frequent first.
    pub types: Vec<TypeRow>,
    /// Aggregate over the `top_k` most frequent types.
    pub top: Option<Metrics>,
    /// Aggregate over every call with this side present.
    pub all: Option<Metrics>,
}

impl SideReport {
    pub(crate) fn build(
        side: Side,
        labels: &[Option<String>],
        truth: &[f64],
        predicted: &[f64],
        top_k: usize,
    ) -> Result<Self, EvalError> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                groups.entry(l).or_default().push(i);
            }
        }
        let mut order: Vec<(&str, &Vec<usize>)> = groups.iter().map(|(k, v)| (*k, v)).collect();
        order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));

        let mut types = Vec::with_capacity(order.len());
        for (name, idx) in &order {
            if let Some(metrics) = metrics_at(truth, predicted, idx)? {
                types.push(TypeRow {
                    cargo_type: name.to_string(),
                    metrics,
                });
            }
        }
        let top_idx: Vec<usize> = order.iter().take(top_k).flat_map(|(_, v)| v.iter().copied()).collect();
        let all_idx: Vec<usize> = order.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        Ok(Self {
            side,
            types,
            top: metrics_at(truth, predicted, &top_idx)?,
            all: metrics_at(truth, predicted, &all_idx)?,
        })
    }

    pub fn top_rows(&self, k: usize) -> &[TypeRow] {
        &self.types[..k.min(self.types.len())]
    }

    pub fn get(&self, cargo_type: &str) -> Option<&TypeRow> {
        self.types.iter().find(|r| r.cargo_type == cargo_type)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_year: i32,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub top_k: usize,
    /// Pooled over every row regardless of side.
    pub overall: Metrics,
    pub sides: Vec<SideReport>,
    pub folds: Vec<FoldResult>,
    pub warnings: Vec<String>,
    pub call_ids: Vec<String>,
    /// Out-of-fold prediction per row.
    pub predictions: Vec<f64>,
}

impl EvalReport {
    pub fn side(&self, side: Side) -> Option<&SideReport> {
        self.sides.iter().find(|s| s.side == side)
    }
}

fn cell(m: Option<f64>) -> String {
    m.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
}

/// Markdown tables with one block per side: the top-K cargo types sorted by
/// the primary model's MAE, then "Top K" and "All" aggregates, then the
/// per-fold breakdown.
pub fn render_markdown(primary: &EvalReport, baseline: Option<&EvalReport>) -> String {
    let mut out = String::new();
    let p = &primary.model;
    for side in &primary.sides {
        let other = baseline.and_then(|b| b.side(side.side));
        let _ = writeln!(out, "### {} cargo types ({})\n", side.side.title(), side.side.code());
        match baseline {
            Some(b) => {
                let _ = writeln!(
                    out,
                    "| {} cargo type | MAE [h] {p} | MAE [h] {} | RMSE {p} | MAPE [%] {p} |",
                    side.side.title(),
                    b.model
                );
                out.push_str("|---|---:|---:|---:|---:|\n");
            }
            None => {
                let _ = writeln!(out, "| {} cargo type | MAE [h] {p} | RMSE {p} | MAPE [%] {p} |", side.side.title());
                out.push_str("|---|---:|---:|---:|\n");
            }
        }
        let mut rows: Vec<&TypeRow> = side.top_rows(primary.top_k).iter().collect();
        rows.sort_by(|a, b| a.metrics.mae.total_cmp(&b.metrics.mae).then(a.cargo_type.cmp(&b.cargo_type)));
        let mut line = |label: &str, m: Option<Metrics>, b: Option<Option<Metrics>>| {
            let _ = match b {
                Some(bm) => writeln!(
                    out,
                    "| {label} | {} | {} | {} | {} |",
                    cell(m.map(|m| m.mae)),
                    cell(bm.map(|m| m.mae)),
                    cell(m.map(|m| m.rmse)),
                    cell(m.map(|m| m.mape))
                ),
                None => writeln!(
                    out,
                    "| {label} | {} | {} | {} |",
                    cell(m.map(|m| m.mae)),
                    cell(m.map(|m| m.rmse)),
                    cell(m.map(|m| m.mape))
                ),
            };
        };
        for r in rows {
            let b = baseline.map(|_| other.and_then(|o| o.get(&r.cargo_type)).map(|r| r.metrics));
            line(&r.cargo_type, Some(r.metrics), b);
        }
        let k = primary.top_k.min(side.types.len());
        let code = side.side.code();
        line(&format!("Top {k} cargo types ({code})"), side.top, baseline.map(|_| other.and_then(|o| o.top)));
        line(&format!("All cargo types ({code})"), side.all, baseline.map(|_| other.and_then(|o| o.all)));
        out.push('\n');
    }

    let _ = writeln!(out, "### Folds ({p})\n");
    out.push_str("| Test year | Train rows | Test rows | MAE [h] | RMSE | MAPE [%] |\n|---|---:|---:|---:|---:|---:|\n");
    for f in &primary.folds {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            f.test_year,
            f.n_train,
            f.n_test,
            cell(f.metrics.map(|m| m.mae)),
            cell(f.metrics.map(|m| m.rmse)),
            cell(f.metrics.map(|m| m.mape))
        );
    }
    let o = primary.overall;
    let _ = writeln!(out, "| Pooled | | {} | {:.2} | {:.2} | {:.2} |", o.n, o.mae, o.rmse, o.mape);
    if !primary.warnings.is_empty() {
        out.push_str("\nWarnings:\n\n");
        for w in &primary.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

/// Cargo types of one call's two operations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSides {
    pub unload: Option<String>,
    pub load: Option<String>,
}

impl CallSides {
    fn get(&self, side: Side) -> Option<&str> {
        match side {
            Side::Unload => self.unload.as_deref(),
            Side::Load => self.load.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub cargo_type: String,
    pub model: Metrics,
    pub port: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSide {
    pub side: Side,
    /// Types with at least `min_count` calls, by ascending model MAE.
    pub rows: Vec<ComparisonRow>,
    /// Over all calls of the listed types.
    pub combined: Option<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub min_count: usize,
    pub sides: Vec<ComparisonSide>,
}

pub fn compare_with_port(
    predicted: &[f64],
    port_estimates: &[f64],
    truth: &[f64],
    sides: &[CallSides],
    min_count: usize,
) -> Result<ComparisonReport, EvalError> {
    for len in [port_estimates.len(), sides.len()] {
        if len != predicted.len() {
            return Err(EvalError::LengthMismatch {
                truth: len,
                predicted: predicted.len(),
            });
        }
    }
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut out = Vec::new();
    for side in [Side::Unload, Side::Load] {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in sides.iter().enumerate() {
            if let Some(t) = s.get(side) {
                groups.entry(t).or_default().push(i);
            }
        }
        let mut rows = Vec::new();
        let mut kept: BTreeSet<usize> = BTreeSet::new();
        for (t, idx) in groups.iter().filter(|(_, v)| v.len() >= min_count.max(1)) {
            kept.extend(idx.iter().copied());
            rows.push(ComparisonRow {
                cargo_type: t.to_string(),
                model: metrics_at(truth, predicted, idx)?.expect("non-empty group"),
                port: metrics_at(truth, port_estimates, idx)?.expect("non-empty group"),
            });
        }
        rows.sort_by(|a, b| a.model.mae.total_cmp(&b.model.mae).then(a.cargo_type.cmp(&b.cargo_type)));
        let kept: Vec<usize> = kept.into_iter().collect();
        let combined = match (metrics_at(truth, predicted, &kept)?, metrics_at(truth, port_estimates, &kept)?) {
            (Some(model), Some(port)) => Some(ComparisonRow {
                cargo_type: "Combined".into(),
                model,
                port,
            }),
            _ => None,
        };
        out.push(ComparisonSide { side, rows, combined });
    }
    Ok(ComparisonReport { min_count, sides: out })
}

/// Two-column MAE table per side, with the lower MAE in bold.
pub fn render_comparison_markdown(report: &ComparisonReport, model_name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| | Cargo type | {model_name} MAE [h] | Port MAE [h] |");
    out.push_str("|---|---|---:|---:|\n");
    let bold = |a: f64, b: f64| {
        if a < b {
            (format!("**{a:.2}**"), format!("{b:.2}"))
        } else if b < a {
            (format!("{a:.2}"), format!("**{b:.2}**"))
        } else {
            (format!("{a:.2}"), format!("{b:.2}"))
        }
    };
    for side in &report.sides {
        for (i, r) in side.rows.iter().chain(side.combined.as_ref()).enumerate() {
            let (m, p) = bold(r.model.mae, r.port.mae);
            let label = if i == 0 { side.side.title() } else { "" };
            let _ = writeln!(out, "| {label} | {} | {m} | {p} |", r.cargo_type);
        }
    }
    out
}
