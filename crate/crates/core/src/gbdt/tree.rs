//! Exact greedy regression tree on squared error.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature at a node. The split maximizing
//! `SSE(parent) - SSE(left) - SSE(right)` wins; ties go to the lowest feature
//! index, then the lowest threshold. Missing values (NaN) follow the child
//! that holds more of the node's non-missing rows (left on a tie), and are
//! counted on that side when scoring the split. Leaves predict
//! `sum(residuals) / (n + l2)`.

use serde::{Deserialize, Serialize};

/// Relative slack under which two gains are considered tied, and under which
/// a gain is treated as rounding noise.
pub(crate) const GAIN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_reg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Output for one encoded row; NaN marks a missing value.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    let go_left = if x.is_nan() { *missing_left } else { x <= *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Adds each split's gain to `gains[feature]`.
    pub fn accumulate_gains(&self, gains: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                gains[*feature] += gain;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub missing_left: bool,
    pub gain: f64,
}

/// Column-major view of an encoded matrix with each column's non-missing
/// rows presorted, so boosting rounds skip the sort.
pub(crate) struct Columns<'a> {
    pub cols: &'a [Vec<f64>],
    order: Vec<Vec<usize>>,
}

impl<'a> Columns<'a> {
    pub fn new(cols: &'a [Vec<f64>]) -> Self {
        let order = cols
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..col.len()).filter(|&i| !col[i].is_nan()).collect();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { cols, order }
    }
}

/// Fits one tree on row-major encoded rows.
pub fn fit_tree(rows: &[Vec<f64>], residuals: &[f64], params: &TreeParams) -> RegressionTree {
    let n_features = rows.first().map_or(0, Vec::len);
    let cols: Vec<Vec<f64>> = (0..n_features)
        .map(|f| rows.iter().map(|r| r[f]).collect())
        .collect();
    fit_tree_columns(&Columns::new(&cols), residuals, params).0
}

/// Fits one tree and also returns the leaf value reached by every row.
pub(crate) fn fit_tree_columns(
    x: &Columns<'_>,
    residuals: &[f64],
    params: &TreeParams,
) -> (RegressionTree, Vec<f64>) {
    let n = residuals.len();
    let sorted = x.order.clone();
    let mut builder = Builder {
        x,
        residuals,
        params,
        nodes: Vec::new(),
        fitted: vec![0.0; n],
        side: vec![false; n],
    };
    let all: Vec<usize> = (0..n).collect();
    builder.grow(all, sorted, 0);
    (RegressionTree { nodes: builder.nodes }, builder.fitted)
}

struct Builder<'a, 'b> {
    x: &'a Columns<'b>,
    residuals: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    fitted: Vec<f64>,
    side: Vec<bool>,
}

impl Builder<'_, '_> {
    fn grow(&mut self, rows: Vec<usize>, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let sum: f64 = rows.iter().map(|&i| self.residuals[i]).sum();
        let n = rows.len();
        let split = if depth < self.params.max_depth && n >= 2 * self.params.min_samples_leaf.max(1) {
            best_split(self.x, self.residuals, &rows, &sorted, self.params.min_samples_leaf)
        } else {
            None
        };
        let Some(split) = split else {
            let value = sum / (n as f64 + self.params.l2_leaf_reg);
            let value = if value.is_finite() { value } else { 0.0 };
            for &i in &rows {
                self.fitted[i] = value;
            }
            self.nodes.push(Node::Leaf { value });
            return id;
        };

        let col = &self.x.cols[split.feature];
        for &i in &rows {
            let v = col[i];
            self.side[i] = if v.is_nan() { split.missing_left } else { v <= split.threshold };
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.side[i]);
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for s in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = s.into_iter().partition(|&i| self.side[i]);
            left_sorted.push(l);
            right_sorted.push(r);
        }

        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            missing_left: split.missing_left,
            gain: split.gain,
            left: usize::MAX,
            right: usize::MAX,
        });
        let l = self.grow(left_rows, left_sorted, depth + 1);
        let r = self.grow(right_rows, right_sorted, depth + 1);
        if let Node::Split { left, right, .. } = &mut self.nodes[id] {
            *left = l;
            *right = r;
        }
        id
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b { a } else { m }
}

/// Best split at a node, or `None` when no admissible split improves SSE.
///
/// `sorted[f]` holds the node's non-missing rows ordered by feature `f`.
pub(crate) fn best_split(
    x: &Columns<'_>,
    residuals: &[f64],
    rows: &[usize],
    sorted: &[Vec<usize>],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&i| residuals[i]).sum();
    let sum_sq: f64 = rows.iter().map(|&i| residuals[i] * residuals[i]).sum();
    let parent_term = total * total / n as f64;
    let noise_floor = GAIN_RTOL * sum_sq.max(f64::MIN_POSITIVE);
    let min_leaf = min_leaf.max(1);

    let mut best: Option<SplitCandidate> = None;
    for (f, order) in sorted.iter().enumerate() {
        let col = &x.cols[f];
        let present = order.len();
        let missing = n - present;
        let present_sum: f64 = order.iter().map(|&i| residuals[i]).sum();
        let missing_sum = total - present_sum;

        let mut left_sum = 0.0;
        for k in 0..present.saturating_sub(1) {
            let i = order[k];
            left_sum += residuals[i];
            let (v, next) = (col[i], col[order[k + 1]]);
            if v == next {
                continue;
            }
            let left_present = k + 1;
            let right_present = present - left_present;
            let missing_left = left_present >= right_present;
            let (nl, sl) = if missing_left {
                (left_present + missing, left_sum + missing_sum)
            } else {
                (left_present, left_sum)
            };
            let (nr, sr) = (n - nl, total - sl);
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent_term;
            if gain <= noise_floor {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => gain > b.gain + GAIN_RTOL * b.gain.abs(),
            };
            if better {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold: midpoint(v, next),
                    missing_left,
                    gain,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize, min_leaf: usize, l2: f64) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_leaf: min_leaf,
            l2_leaf_reg: l2,
        }
    }

    #[test]
    fn constant_residuals_give_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t = fit_tree(&rows, &[4.0; 10], &params(3, 1, 0.0));
        assert_eq!(t.nodes(), &[Node::Leaf { value: 4.0 }]);
    }

    #[test]
    fn two_point_split() {
        let rows = vec![vec![0.0], vec![1.0]];
        let t = fit_tree(&rows, &[0.0, 10.0], &params(1, 1, 0.0));
        match t.root() {
            Node::Split { feature, threshold, gain, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
                assert_eq!(*gain, 50.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.predict(&[0.0]), 0.0);
        assert_eq!(t.predict(&[1.0]), 10.0);
    }

    #[test]
    fn leaf_shrinkage() {
        let rows = vec![vec![0.0], vec![1.0]];
        let t = fit_tree(&rows, &[6.0, 6.0], &params(2, 1, 1.0));
        assert_eq!(t.nodes(), &[Node::Leaf { value: 4.0 }]);
    }

    #[test]
    fn respects_min_leaf_and_depth() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let res: Vec<f64> = (0..40).map(|i| ((i * 31 % 17) as f64).sin() * 10.0).collect();
        let t = fit_tree(&rows, &res, &params(3, 4, 0.0));
        assert!(t.depth() <= 3);
        // Every leaf gets at least 4 training rows.
        let mut counts = std::collections::HashMap::new();
        for r in &rows {
            *counts.entry(t.predict(r).to_bits()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 4));
        for n in t.nodes() {
            if let Node::Split { gain, .. } = n {
                assert!(*gain >= 0.0);
            }
        }
    }

    #[test]
    fn missing_values_follow_heavier_side() {
        // Non-missing: 3 rows <= 2.5 (residual 0), 1 row above (residual 9);
        // missing rows join the 3-row side.
        let rows = vec![
            vec![1.0],
            vec![2.0],
            vec![2.5],
            vec![10.0],
            vec![f64::NAN],
        ];
        let t = fit_tree(&rows, &[0.0, 0.0, 0.0, 9.0, 0.0], &params(1, 1, 0.0));
        match t.root() {
            Node::Split { missing_left, threshold, .. } => {
                assert!(*missing_left);
                assert_eq!(*threshold, 6.25);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(&[f64::NAN]), 0.0);
    }
}
