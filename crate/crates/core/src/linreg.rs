//! Ridge linear regression baseline with explicit preprocessing.
//!
//! Numeric and boolean columns are z-scored, with missing values imputed at
//! the column mean. Categorical columns are one-hot encoded against the
//! training vocabulary with the most frequent level as the reference, and
//! each dummy is z-scored as well. Labels unseen in training fall into an
//! "other" bucket that sits at the training mean of every dummy (all-zero in
//! standardized space). Zero-variance columns are dropped.
//!
//! The weights minimize `|y - b - Zw|^2 + ridge * |w|^2` on the centered,
//! standardized design `Z`, solved by Householder QR of the augmented system
//! `[Z; sqrt(ridge) I] w = [y - mean(y); 0]`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cleaning::NONE_LABEL;
use crate::features::{FeatureError, FeatureKind, FeatureMatrix, FeatureSchema, FeatureValue};
use crate::gbdt::MIN_PREDICTION_HOURS;
use crate::persist::{self, EnvelopeMeta, PersistError};
use crate::portcall::TurnaroundHours;

pub const MODEL_FORMAT: &str = "linm";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Label of the bucket for categories unseen during fitting.
pub const OTHER_LABEL: &str = "__other__";

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("design matrix is constant after dropping zero-variance columns")]
    ConstantDesign,
    #[error("design matrix is rank deficient; use a positive ridge penalty")]
    Singular,
    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),
    #[error("ridge penalty must be finite and non-negative")]
    BadRidge,
    #[error("schema mismatch at column {index}: model expects {expected:?}, got {found:?}")]
    SchemaMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// One standardized design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    /// Source schema column.
    pub source: usize,
    /// `None` for numeric columns, the level for dummies.
    pub level: Option<String>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub schema: FeatureSchema,
    /// Training mean per numeric source column, used for imputation.
    pub numeric_means: BTreeMap<usize, f64>,
    /// Training vocabulary per categorical source column.
    pub vocabularies: BTreeMap<usize, Vec<String>>,
    pub design: Vec<DesignColumn>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub ridge: f64,
}

/// Coefficients on the original (unstandardized) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCoefficients {
    pub intercept: f64,
    /// `(term, slope)`; dummies are named `column=level`.
    pub terms: Vec<(String, f64)>,
}

fn raw_value(model_schema: &FeatureSchema, vocab: &BTreeMap<usize, Vec<String>>, col: &DesignColumn, row: &[FeatureValue], numeric_means: &BTreeMap<usize, f64>) -> f64 {
    let v = &row[col.source];
    match &col.level {
        None => v
            .as_num()
            .filter(|x| x.is_finite())
            .unwrap_or_else(|| numeric_means[&col.source]),
        Some(level) => {
            let label = v.as_cat().unwrap_or(NONE_LABEL);
            let known = vocab
                .get(&col.source)
                .is_some_and(|vs| vs.binary_search_by(|s| s.as_str().cmp(label)).is_ok());
            debug_assert_eq!(model_schema.columns()[col.source].kind, FeatureKind::Categorical);
            if known {
                if label == level { 1.0 } else { 0.0 }
            } else {
                // "other" bucket: training mean of the dummy, i.e. z = 0.
                col.mean
            }
        }
    }
}

impl LinearModel {
    fn standardized_row(&self, row: &[FeatureValue]) -> Vec<f64> {
        self.design
            .iter()
            .map(|c| (raw_value(&self.schema, &self.vocabularies, c, row, &self.numeric_means) - c.mean) / c.std)
            .collect()
    }

    /// Standardized design rows for a matrix with this model's schema.
    pub fn design_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<Vec<f64>>, LinearError> {
        self.check_schema(matrix.schema())?;
        Ok(matrix.rows().iter().map(|r| self.standardized_row(r)).collect())
    }

    pub fn predict_raw(&self, row: &[FeatureValue]) -> Result<f64, LinearError> {
        self.schema.check_row(row)?;
        let z = self.standardized_row(row);
        Ok(self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn predict(&self, row: &[FeatureValue]) -> Result<TurnaroundHours, LinearError> {
        let raw = self.predict_raw(row)?;
        let clamped = if raw.is_finite() { raw.max(MIN_PREDICTION_HOURS) } else { MIN_PREDICTION_HOURS };
        Ok(TurnaroundHours::new(clamped).expect("clamped prediction is positive"))
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), LinearError> {
        let (a, b) = (self.schema.columns(), schema.columns());
        for i in 0..a.len().max(b.len()) {
            if a.get(i) != b.get(i) {
                let name = |c: Option<&crate::features::Column>| c.map(|c| c.name.clone()).unwrap_or_default();
                return Err(LinearError::SchemaMismatch {
                    index: i,
                    expected: name(a.get(i)),
                    found: name(b.get(i)),
                });
            }
        }
        Ok(())
    }

    pub fn raw_coefficients(&self) -> RawCoefficients {
        let mut intercept = self.intercept;
        let mut terms = Vec::with_capacity(self.design.len());
        for (c, w) in self.design.iter().zip(&self.weights) {
            let slope = w / c.std;
            intercept -= slope * c.mean;
            let name = &self.schema.columns()[c.source].name;
            let term = match &c.level {
                None => name.clone(),
                Some(l) => format!("{name}={l}"),
            };
            terms.push((term, slope));
        }
        RawCoefficients { intercept, terms }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Column std below this (relative to the column's scale) counts as zero.
const ZERO_VARIANCE_RTOL: f64 = 1e-12;

pub fn fit_linear(matrix: &FeatureMatrix, ridge: f64) -> Result<LinearModel, LinearError> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LinearError::BadRidge);
    }
    let n = matrix.n_rows();
    if n < 2 {
        return Err(LinearError::TooFewRows(n));
    }
    let y = matrix.target();
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(LinearError::NonFiniteTarget(i));
    }
    let schema = matrix.schema().clone();
    let rows = matrix.rows();

    let mut numeric_means = BTreeMap::new();
    let mut vocabularies = BTreeMap::new();
    let mut candidates: Vec<DesignColumn> = Vec::new();
    for (j, col) in schema.columns().iter().enumerate() {
        match col.kind {
            FeatureKind::Numeric | FeatureKind::Boolean => {
                let present: Vec<f64> = rows.iter().filter_map(|r| r[j].as_num()).filter(|v| v.is_finite()).collect();
                let fill = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
                numeric_means.insert(j, fill);
                candidates.push(DesignColumn { source: j, level: None, mean: 0.0, std: 0.0 });
            }
            FeatureKind::Categorical => {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for r in rows {
                    *counts.entry(r[j].as_cat().unwrap_or(NONE_LABEL).to_string()).or_default() += 1;
                }
                // Reference level: most frequent, lexicographically first on ties.
                let reference = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(k, _)| k.clone());
                for level in counts.keys() {
                    if Some(level) != reference.as_ref() {
                        candidates.push(DesignColumn { source: j, level: Some(level.clone()), mean: 0.0, std: 0.0 });
                    }
                }
                vocabularies.insert(j, counts.into_keys().collect::<Vec<_>>());
            }
        }
    }

    let mut design = Vec::new();
    let mut raw_cols: Vec<Vec<f64>> = Vec::new();
    for mut c in candidates {
        let values: Vec<f64> = rows
            .iter()
            .map(|r| raw_value(&schema, &vocabularies, &c, r, &numeric_means))
            .collect();
        let (mean, std) = mean_std(values.iter().copied());
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if std > ZERO_VARIANCE_RTOL * scale.max(f64::MIN_POSITIVE) && std.is_finite() {
            c.mean = mean;
            c.std = std;
            design.push(c);
            raw_cols.push(values);
        }
    }
    if design.is_empty() {
        return Err(LinearError::ConstantDesign);
    }

    let p = design.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let extra = if ridge > 0.0 { p } else { 0 };
    let mut a = DMatrix::<f64>::zeros(n + extra, p);
    let mut rhs = DVector::<f64>::zeros(n + extra);
    for (k, (c, values)) in design.iter().zip(&raw_cols).enumerate() {
        for i in 0..n {
            a[(i, k)] = (values[i] - c.mean) / c.std;
        }
        if ridge > 0.0 {
            a[(n + k, k)] = ridge.sqrt();
        }
    }
    for i in 0..n {
        rhs[i] = y[i] - y_mean;
    }
    if n + extra < p {
        return Err(LinearError::Singular);
    }

    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|k| r[(k, k)].abs()).fold(0.0f64, f64::max);
    if (0..p).any(|k| r[(k, k)].abs() <= 1e-10 * max_diag) {
        return Err(LinearError::Singular);
    }
    let qty = qr.q().transpose() * rhs;
    let w = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or(LinearError::Singular)?;

    Ok(LinearModel {
        schema,
        numeric_means,
        vocabularies,
        design,
        weights: w.iter().copied().collect(),
        intercept: y_mean,
        ridge,
    })
}

pub fn save_linear(model: &LinearModel, path: impl AsRef<Path>) -> Result<EnvelopeMeta, LinearError> {
    Ok(persist::save(path, MODEL_FORMAT, MODEL_VERSION, model)?)
}

pub fn load_linear(path: impl AsRef<Path>) -> Result<(LinearModel, EnvelopeMeta), LinearError> {
    Ok(persist::load(path, MODEL_FORMAT, MODEL_VERSION)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Column;

    fn matrix(cols: Vec<(&str, FeatureKind)>, rows: Vec<Vec<FeatureValue>>, y: Vec<f64>) -> FeatureMatrix {
        let n = rows.len();
        let cols = cols.into_iter().map(|(n, k)| Column { name: n.into(), kind: k }).collect();
        FeatureMatrix::new(
            FeatureSchema::new(cols).unwrap(),
            rows,
            y,
            (0..n).map(|i| i.to_string()).collect(),
            vec![2018; n],
        )
        .unwrap()
    }

    #[test]
    fn recovers_exact_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 1.7 - 3.0).collect();
        let rows = xs.iter().map(|x| vec![FeatureValue::Num(*x)]).collect();
        let m = matrix(vec![("x", FeatureKind::Numeric)], rows, xs.iter().map(|x| 3.0 * x + 1.0).collect());
        let model = fit_linear(&m, 0.0).unwrap();
        let coef = model.raw_coefficients();
        assert!((coef.terms[0].1 - 3.0).abs() < 1e-6);
        assert!((coef.intercept - 1.0).abs() < 1e-6, "{coef:?}");
        // a tiny ridge shrinks only slightly
        let shrunk = fit_linear(&m, DEFAULT_RIDGE).unwrap().raw_coefficients();
        assert!((shrunk.terms[0].1 - 3.0).abs() < 1e-5);
        let r = model.predict_raw(&[FeatureValue::Num(xs[5])]).unwrap();
        assert!((r - (3.0 * xs[5] + 1.0)).abs() < 1e-6);
    }

    #[test]
    fn per_group_means_and_other_bucket() {
        let rows: Vec<Vec<FeatureValue>> = (0..10)
            .map(|i| vec![FeatureValue::Cat(if i < 4 { "A" } else { "B" }.into())])
            .collect();
        let y = (0..10).map(|i| if i < 4 { 10.0 + (i % 2) as f64 } else { 20.0 - (i % 2) as f64 }).collect();
        let m = matrix(vec![("k", FeatureKind::Categorical)], rows, y);
        let model = fit_linear(&m, DEFAULT_RIDGE).unwrap();
        let a = model.predict_raw(&[FeatureValue::Cat("A".into())]).unwrap();
        let b = model.predict_raw(&[FeatureValue::Cat("B".into())]).unwrap();
        assert!((a - 10.5).abs() < 1e-6, "{a}");
        assert!((b - 19.5).abs() < 1e-6, "{b}");
        let other = model.predict(&[FeatureValue::Cat("Z".into())]).unwrap().value();
        assert!(other.is_finite());
        // The other bucket predicts the training mean.
        assert!((other - (4.0 * 10.5 + 6.0 * 19.5) / 10.0).abs() < 1e-6);
    }

    #[test]
    fn constant_design_is_an_error() {
        let rows = (0..5).map(|_| vec![FeatureValue::Num(2.0)]).collect();
        let m = matrix(vec![("x", FeatureKind::Numeric)], rows, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(fit_linear(&m, 0.0), Err(LinearError::ConstantDesign)));
        let m = matrix(vec![("x", FeatureKind::Numeric)], vec![vec![FeatureValue::Num(1.0)]], vec![1.0]);
        assert!(matches!(fit_linear(&m, 0.0), Err(LinearError::TooFewRows(1))));
    }

    #[test]
    fn collinear_columns_need_ridge() {
        let rows: Vec<Vec<FeatureValue>> = (0..8)
            .map(|i| vec![FeatureValue::Num(i as f64), FeatureValue::Num(2.0 * i as f64)])
            .collect();
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let cols = vec![("a", FeatureKind::Numeric), ("b", FeatureKind::Numeric)];
        let m = matrix(cols, rows, y);
        assert!(matches!(fit_linear(&m, 0.0), Err(LinearError::Singular)));
        let model = fit_linear(&m, DEFAULT_RIDGE).unwrap();
        assert!((model.predict_raw(&[FeatureValue::Num(3.0), FeatureValue::Num(6.0)]).unwrap() - 3.0).abs() < 1e-4);
    }

    #[test]
    fn clamps_at_floor() {
        let rows: Vec<Vec<FeatureValue>> = (0..6).map(|i| vec![FeatureValue::Num(i as f64)]).collect();
        let m = matrix(vec![("x", FeatureKind::Numeric)], rows, (0..6).map(|i| 1.0 + i as f64).collect());
        let model = fit_linear(&m, 0.0).unwrap();
        assert_eq!(model.predict(&[FeatureValue::Num(-50.0)]).unwrap().value(), 1.0);
    }
}
