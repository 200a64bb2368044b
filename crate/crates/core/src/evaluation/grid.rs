use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cross_validate, CvConfig, EvalError, GbdtFactory, Metrics};
use crate::features::FeatureMatrix;
use crate::gbdt::TrainConfig;

/// Candidate values per hyper-parameter. An empty axis keeps the base
/// configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub n_trees: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub l2_leaf_reg: Vec<f64>,
    pub ots_smoothing: Vec<f64>,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() { vec![base] } else { values.to_vec() }
}

impl GridAxes {
    /// Cartesian product in axis order, last axis varying fastest.
    pub fn points(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &n_trees in &axis(&self.n_trees, base.n_trees) {
            for &learning_rate in &axis(&self.learning_rate, base.learning_rate) {
                for &max_depth in &axis(&self.max_depth, base.max_depth) {
                    for &min_samples_leaf in &axis(&self.min_samples_leaf, base.min_samples_leaf) {
                        for &l2_leaf_reg in &axis(&self.l2_leaf_reg, base.l2_leaf_reg) {
                            for &ots_smoothing in &axis(&self.ots_smoothing, base.ots_smoothing) {
                                out.push(TrainConfig {
                                    n_trees,
                                    learning_rate,
                                    max_depth,
                                    min_samples_leaf,
                                    l2_leaf_reg,
                                    ots_smoothing,
                                    seed: base.seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub config: TrainConfig,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    /// Every grid point, best first.
    pub leaderboard: Vec<LeaderboardEntry>,
}

fn config_order(a: &TrainConfig, b: &TrainConfig) -> Ordering {
    a.n_trees
        .cmp(&b.n_trees)
        .then(a.learning_rate.total_cmp(&b.learning_rate))
        .then(a.max_depth.cmp(&b.max_depth))
        .then(a.min_samples_leaf.cmp(&b.min_samples_leaf))
        .then(a.l2_leaf_reg.total_cmp(&b.l2_leaf_reg))
        .then(a.ots_smoothing.total_cmp(&b.ots_smoothing))
}

/// Lowest pooled MAE wins; ties go to lower RMSE, then the smaller config.
pub fn grid_search(
    matrix: &FeatureMatrix,
    base: &TrainConfig,
    axes: &GridAxes,
    cv: &CvConfig,
) -> Result<GridResult, EvalError> {
    let points = axes.points(base);
    let mut leaderboard = points
        .into_par_iter()
        .map(|config| {
            config.validate().map_err(|e| EvalError::Fit(e.to_string()))?;
            let report = cross_validate(matrix, &GbdtFactory { config: config.clone() }, cv)?;
            Ok(LeaderboardEntry {
                config,
                metrics: report.overall,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    leaderboard.sort_by(|a, b| {
        a.metrics
            .mae
            .total_cmp(&b.metrics.mae)
            .then(a.metrics.rmse.total_cmp(&b.metrics.rmse))
            .then(config_order(&a.config, &b.config))
    });
    Ok(GridResult {
        best: leaderboard[0].config.clone(),
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_is_axis_product() {
        let axes = GridAxes {
            n_trees: vec![10, 20],
            learning_rate: vec![0.1, 0.3, 0.5],
            max_depth: vec![2, 4],
            ..Default::default()
        };
        let pts = axes.points(&TrainConfig::default());
        assert_eq!(pts.len(), 12);
        assert!(pts.iter().all(|c| c.l2_leaf_reg == 3.0));
        assert_eq!(GridAxes::default().points(&TrainConfig::default()).len(), 1);
    }
}
