//! Leave-one-year-out cross-validation, error metrics and reports.

mod grid;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cleaning::NONE_LABEL;
use crate::features::FeatureMatrix;
use crate::gbdt::{self, GbdtModel, TrainConfig};
use crate::linreg::{self, LinearModel};

pub use grid::{grid_search, GridAxes, GridResult, LeaderboardEntry};
pub use report::{
    compare_with_port, render_comparison_markdown, render_markdown, CallSides, ComparisonReport, ComparisonRow,
    EvalReport, FoldResult, Side, SideReport, TypeRow,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth has {truth} values but predictions have {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("metrics over an empty set are undefined")]
    Empty,
    #[error("true turnaround must be positive, got {0}")]
    NonPositiveTruth(f64),
    #[error("need at least 2 distinct arrival years, found {0}")]
    TooFewYears(usize),
    #[error("fold {year}: a held-out target reached the training set")]
    Leakage { year: i32 },
    #[error("fold {year}: {message}")]
    Model { year: i32, message: String },
    #[error("model error: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    pub n: usize,
}

pub fn compute_metrics(truth: &[f64], predicted: &[f64]) -> Result<Metrics, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&t) = truth.iter().find(|t| !(**t > 0.0)) {
        return Err(EvalError::NonPositiveTruth(t));
    }
    let n = truth.len() as f64;
    let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
    for (y, p) in truth.iter().zip(predicted) {
        let e = (y - p).abs();
        abs += e;
        sq += e * e;
        pct += e / y;
    }
    let mae = abs / n;
    // Rounding can leave the root an ulp below the mean for equal errors.
    let rmse = (sq / n).sqrt().max(mae);
    Ok(Metrics {
        mae,
        rmse,
        mape: 100.0 * pct / n,
        n: truth.len(),
    })
}

/// Like [`compute_metrics`] over the rows at `idx`, absent when empty.
pub(crate) fn metrics_at(truth: &[f64], predicted: &[f64], idx: &[usize]) -> Result<Option<Metrics>, EvalError> {
    if idx.is_empty() {
        return Ok(None);
    }
    let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
    let p: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
    compute_metrics(&t, &p).map(Some)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_year: i32,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

pub fn leave_one_year_out(matrix: &FeatureMatrix) -> Result<FoldPlan, EvalError> {
    let years: BTreeSet<i32> = matrix.years().iter().copied().collect();
    if years.len() < 2 {
        return Err(EvalError::TooFewYears(years.len()));
    }
    let folds = years
        .into_iter()
        .map(|year| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..matrix.n_rows()).partition(|&i| matrix.years()[i] == year);
            Fold {
                test_year: year,
                train,
                test,
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Train and test matrices for one fold, built from a copy of the data in
/// which every held-out target is NaN. A training set containing a NaN
/// target means a test row leaked into training.
pub fn poisoned_fold(matrix: &FeatureMatrix, fold: &Fold) -> Result<(FeatureMatrix, FeatureMatrix), EvalError> {
    let mut poisoned = matrix.clone();
    for &i in &fold.test {
        poisoned.set_target(i, f64::NAN);
    }
    let train = poisoned.subset(&fold.train);
    if train.target().iter().any(|v| v.is_nan()) {
        return Err(EvalError::Leakage { year: fold.test_year });
    }
    Ok((train, poisoned.subset(&fold.test)))
}

/// Fold seed drawn from the master seed, independent per test year.
pub fn fold_seed(master: u64, test_year: i32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(test_year as u32 as u64);
    rng.next_u64()
}

pub trait Predictor: Send + Sync {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, EvalError>;
}

pub trait ModelFactory: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, train: &FeatureMatrix, seed: u64) -> Result<Box<dyn Predictor>, EvalError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtFactory {
    pub config: TrainConfig,
}

impl Predictor for GbdtModel {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, EvalError> {
        self.predict_matrix(matrix).map_err(|e| EvalError::Fit(e.to_string()))
    }
}

impl ModelFactory for GbdtFactory {
    fn name(&self) -> String {
        "gbdt".into()
    }

    fn fit(&self, train: &FeatureMatrix, seed: u64) -> Result<Box<dyn Predictor>, EvalError> {
        let config = TrainConfig { seed, ..self.config.clone() };
        let model = gbdt::train(train, &config).map_err(|e| EvalError::Fit(e.to_string()))?;
        Ok(Box::new(model))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFactory {
    pub ridge: f64,
}

impl Default for LinearFactory {
    fn default() -> Self {
        Self {
            ridge: linreg::DEFAULT_RIDGE,
        }
    }
}

impl Predictor for LinearModel {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, EvalError> {
        self.check_schema(matrix.schema()).map_err(|e| EvalError::Fit(e.to_string()))?;
        matrix
            .rows()
            .iter()
            .map(|r| {
                LinearModel::predict(self, r)
                    .map(|h| h.value())
                    .map_err(|e| EvalError::Fit(e.to_string()))
            })
            .collect()
    }
}

impl ModelFactory for LinearFactory {
    fn name(&self) -> String {
        "linear".into()
    }

    fn fit(&self, train: &FeatureMatrix, _seed: u64) -> Result<Box<dyn Predictor>, EvalError> {
        let model = linreg::fit_linear(train, self.ridge).map_err(|e| EvalError::Fit(e.to_string()))?;
        Ok(Box::new(model))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub seed: u64,
    pub top_k: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { seed: 0, top_k: 10 }
    }
}

/// Cargo type of each row on one side, ignoring the absent-side sentinel.
pub(crate) fn side_labels(matrix: &FeatureMatrix, side: Side) -> Vec<Option<String>> {
    match matrix.labels(side.column()) {
        Some(labels) => labels
            .into_iter()
            .map(|l| l.filter(|s| *s != NONE_LABEL).map(str::to_string))
            .collect(),
        None => vec![None; matrix.n_rows()],
    }
}

pub fn cross_validate(
    matrix: &FeatureMatrix,
    factory: &dyn ModelFactory,
    config: &CvConfig,
) -> Result<EvalReport, EvalError> {
    let plan = leave_one_year_out(matrix)?;
    let fold_preds: Vec<Vec<f64>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            let (train, test) = poisoned_fold(matrix, fold)?;
            let model = factory.fit(&train, fold_seed(config.seed, fold.test_year)).map_err(|e| EvalError::Model {
                year: fold.test_year,
                message: e.to_string(),
            })?;
            let pred = model.predict(&test)?;
            if pred.len() != fold.test.len() {
                return Err(EvalError::LengthMismatch {
                    truth: fold.test.len(),
                    predicted: pred.len(),
                });
            }
            Ok(pred)
        })
        .collect::<Result<_, EvalError>>()?;

    let mut predictions = vec![f64::NAN; matrix.n_rows()];
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (fold, pred) in plan.folds.iter().zip(&fold_preds) {
        for (&i, &p) in fold.test.iter().zip(pred) {
            predictions[i] = p;
        }
        let truth: Vec<f64> = fold.test.iter().map(|&i| matrix.target()[i]).collect();
        folds.push(FoldResult {
            test_year: fold.test_year,
            n_train: fold.train.len(),
            n_test: fold.test.len(),
            metrics: compute_metrics(&truth, pred).ok(),
        });
    }

    let mut warnings = Vec::new();
    let mut sides = Vec::new();
    for side in [Side::Unload, Side::Load] {
        let labels = side_labels(matrix, side);
        let mut unseen: BTreeMap<&str, usize> = BTreeMap::new();
        for fold in &plan.folds {
            let trained: BTreeSet<&str> = fold.train.iter().filter_map(|&i| labels[i].as_deref()).collect();
            for &i in &fold.test {
                if let Some(t) = labels[i].as_deref() {
                    if !trained.contains(t) {
                        *unseen.entry(t).or_default() += 1;
                    }
                }
            }
        }
        for (t, k) in unseen {
            warnings.push(format!(
                "cargo type {t} ({}): {k} prediction(s) made without the type in the training fold",
                side.code()
            ));
        }
        sides.push(SideReport::build(side, &labels, matrix.target(), &predictions, config.top_k)?);
    }

    let all: Vec<usize> = (0..matrix.n_rows()).collect();
    Ok(EvalReport {
        model: factory.name(),
        seed: config.seed,
        top_k: config.top_k,
        overall: metrics_at(matrix.target(), &predictions, &all)?.ok_or(EvalError::Empty)?,
        sides,
        folds,
        warnings,
        call_ids: matrix.call_ids().to_vec(),
        predictions,
    })
}
