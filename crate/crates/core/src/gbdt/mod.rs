//! Gradient-boosted regression trees with ordered-target-statistic encoding
//! of categorical columns.
//!
//! Training minimizes squared error. Starting from the mean target, each
//! round fits an exact greedy [`RegressionTree`] to the current residuals
//! and adds it with shrinkage `learning_rate`. Categorical columns are
//! encoded once per run with [`ots::ots_encode`] under a seeded permutation;
//! prediction uses the full-data statistics kept in the [`OtsEncoder`].

pub mod ots;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cleaning::NONE_LABEL;
use crate::features::{FeatureKind, FeatureMatrix, FeatureSchema, FeatureValue};
use crate::persist::{self, EnvelopeMeta, PersistError};
use crate::portcall::TurnaroundHours;

pub use ots::{ots_encode, CategoryStats, OtsEncoder};
pub use tree::{fit_tree, Node, RegressionTree, TreeParams};

pub const MODEL_FORMAT: &str = "gbtm";
pub const MODEL_VERSION: u32 = 1;

/// Predictions never go below the cleaning floor.
pub const MIN_PREDICTION_HOURS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_reg: f64,
    pub ots_smoothing: f64,
    /// Seeds the categorical encoding permutation.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            learning_rate: 0.1,
            max_depth: 6,
            min_samples_leaf: 5,
            l2_leaf_reg: 3.0,
            ots_smoothing: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad("l2_leaf_reg must be a finite non-negative number");
        }
        if !(self.ots_smoothing > 0.0 && self.ots_smoothing.is_finite()) {
            return bad("ots_smoothing must be positive");
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l2_leaf_reg: self.l2_leaf_reg,
        }
    }
}

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("empty categorical column")]
    EmptyColumn,
    #[error("column and target lengths differ")]
    LengthMismatch,
    #[error("permutation is not a bijection on row indices")]
    BadPermutation,
    #[error("training matrix is empty")]
    EmptyMatrix,
    #[error("non-finite target at row {row} (call {call_id:?})")]
    NonFiniteTarget { row: usize, call_id: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("schema mismatch at column {index}: model expects {expected:?}, got {found:?}")]
    SchemaMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub schema: FeatureSchema,
    pub config: TrainConfig,
    pub base_score: f64,
    pub encoder: OtsEncoder,
    pub trees: Vec<RegressionTree>,
    /// Summed split gain per schema column.
    pub feature_gains: Vec<f64>,
    /// Training RMSE after 0, 1, ..., n_trees trees.
    pub train_rmse: Vec<f64>,
}

fn rmse(y: &[f64], pred: &[f64]) -> f64 {
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    (sse / y.len() as f64).sqrt()
}

/// Training-time encoding: ordered statistics for categorical columns,
/// NaN for missing numeric values. Returned column-major.
fn encode_training(
    matrix: &FeatureMatrix,
    prior: f64,
    config: &TrainConfig,
    permutation: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<Option<CategoryStats>>), GbdtError> {
    let mut cols = Vec::with_capacity(matrix.schema().len());
    let mut stats = Vec::with_capacity(matrix.schema().len());
    for (j, col) in matrix.schema().columns().iter().enumerate() {
        match col.kind {
            FeatureKind::Categorical => {
                let labels: Vec<&str> = matrix
                    .rows()
                    .iter()
                    .map(|r| r[j].as_cat().unwrap_or(NONE_LABEL))
                    .collect();
                let (enc, s) = ots_encode(&labels, matrix.target(), permutation, prior, config.ots_smoothing)?;
                cols.push(enc);
                stats.push(Some(s));
            }
            FeatureKind::Numeric | FeatureKind::Boolean => {
                cols.push(
                    matrix
                        .rows()
                        .iter()
                        .map(|r| r[j].as_num().filter(|v| v.is_finite()).unwrap_or(f64::NAN))
                        .collect(),
                );
                stats.push(None);
            }
        }
    }
    Ok((cols, stats))
}

pub fn train(matrix: &FeatureMatrix, config: &TrainConfig) -> Result<GbdtModel, GbdtError> {
    config.validate()?;
    if matrix.is_empty() {
        return Err(GbdtError::EmptyMatrix);
    }
    let y = matrix.target();
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(GbdtError::NonFiniteTarget {
            row,
            call_id: matrix.call_ids()[row].clone(),
        });
    }
    let n = y.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let permutation = ots::random_permutation(n, config.seed);
    let (cols, stats) = encode_training(matrix, base_score, config, &permutation)?;
    let x = tree::Columns::new(&cols);
    let params = config.tree_params();

    let mut pred = vec![base_score; n];
    let mut residuals = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut gains = vec![0.0; matrix.schema().len()];
    let mut history = Vec::with_capacity(config.n_trees + 1);
    history.push(rmse(y, &pred));
    for _ in 0..config.n_trees {
        for i in 0..n {
            residuals[i] = y[i] - pred[i];
        }
        let (tree, fitted) = tree::fit_tree_columns(&x, &residuals, &params);
        for i in 0..n {
            pred[i] += config.learning_rate * fitted[i];
        }
        tree.accumulate_gains(&mut gains);
        trees.push(tree);
        history.push(rmse(y, &pred));
    }

    Ok(GbdtModel {
        schema: matrix.schema().clone(),
        config: config.clone(),
        base_score,
        encoder: OtsEncoder {
            columns: stats,
            prior: base_score,
            smoothing: config.ots_smoothing,
            permutation,
        },
        trees,
        feature_gains: gains,
        train_rmse: history,
    })
}

impl GbdtModel {
    /// Inference-time encoding of one raw row.
    pub fn encode_row(&self, row: &[FeatureValue]) -> Result<Vec<f64>, GbdtError> {
        self.schema.check_row(row)?;
        Ok(self
            .schema
            .columns()
            .iter()
            .enumerate()
            .map(|(j, col)| match col.kind {
                FeatureKind::Categorical => self.encoder.encode(j, row[j].as_cat().unwrap_or(NONE_LABEL)),
                _ => row[j].as_num().filter(|v| v.is_finite()).unwrap_or(f64::NAN),
            })
            .collect())
    }

    /// Unclamped ensemble output for an encoded row.
    pub fn raw_output(&self, encoded: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(encoded)).sum();
        self.base_score + self.config.learning_rate * sum
    }

    pub fn predict(&self, row: &[FeatureValue]) -> Result<TurnaroundHours, GbdtError> {
        let raw = self.raw_output(&self.encode_row(row)?);
        Ok(TurnaroundHours::new(raw.max(MIN_PREDICTION_HOURS)).expect("clamped prediction is positive"))
    }

    /// Checks `schema` column-by-column against the model's.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), GbdtError> {
        let ours = self.schema.columns();
        let theirs = schema.columns();
        for i in 0..ours.len().max(theirs.len()) {
            let describe = |c: Option<&crate::features::Column>| {
                c.map(|c| format!("{} ({:?})", c.name, c.kind)).unwrap_or_else(|| "<none>".into())
            };
            let (a, b) = (ours.get(i), theirs.get(i));
            if a != b {
                return Err(GbdtError::SchemaMismatch {
                    index: i,
                    expected: describe(a),
                    found: describe(b),
                });
            }
        }
        Ok(())
    }

    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
        self.check_schema(matrix.schema())?;
        matrix
            .rows()
            .iter()
            .map(|r| self.predict(r).map(TurnaroundHours::value))
            .collect()
    }
}

/// Split-gain importances scaled to sum to 100, in schema order. Empty when
/// the model never split.
pub fn feature_importance(model: &GbdtModel) -> Vec<(String, f64)> {
    let total: f64 = model.feature_gains.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    model
        .schema
        .names()
        .zip(&model.feature_gains)
        .map(|(name, g)| (name.to_string(), 100.0 * g / total))
        .collect()
}

pub fn save_model(model: &GbdtModel, path: impl AsRef<Path>) -> Result<EnvelopeMeta, GbdtError> {
    Ok(persist::save(path, MODEL_FORMAT, MODEL_VERSION, model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(GbdtModel, EnvelopeMeta), GbdtError> {
    Ok(persist::load(path, MODEL_FORMAT, MODEL_VERSION)?)
}

pub fn decode_model(bytes: &[u8]) -> Result<(GbdtModel, EnvelopeMeta), GbdtError> {
    Ok(persist::decode(bytes, MODEL_FORMAT, MODEL_VERSION)?)
}
