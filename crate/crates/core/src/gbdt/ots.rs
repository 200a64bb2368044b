//! Ordered target statistics for categorical columns.
//!
//! During training, a row's encoding only uses the targets of rows that come
//! before it in a fixed permutation, so a row never sees its own target:
//!
//! ```text
//! enc(i) = (sum of earlier same-category targets + a * P) / (earlier count + a)
//! ```
//!
//! At inference the full-data statistics are used, and unseen categories map
//! to the prior `P`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GbdtError;

/// Target sum and count per category over the full training data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub totals: BTreeMap<String, (f64, u64)>,
}

impl CategoryStats {
    pub fn count(&self) -> u64 {
        self.totals.values().map(|(_, n)| n).sum()
    }
}

/// Encoder state for every categorical column of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtsEncoder {
    /// Indexed by schema column; `None` for non-categorical columns.
    pub columns: Vec<Option<CategoryStats>>,
    pub prior: f64,
    pub smoothing: f64,
    /// Row visiting order used for the training-time encoding.
    pub permutation: Vec<usize>,
}

impl OtsEncoder {
    pub fn encode(&self, column: usize, category: &str) -> f64 {
        let stats = self.columns[column]
            .as_ref()
            .expect("encode called on a categorical column");
        inference_value(stats, category, self.prior, self.smoothing)
    }
}

pub fn inference_value(stats: &CategoryStats, category: &str, prior: f64, smoothing: f64) -> f64 {
    match stats.totals.get(category) {
        Some((sum, count)) => (sum + smoothing * prior) / (*count as f64 + smoothing),
        None => prior,
    }
}

/// Seeded uniform permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Training-time ordered encoding of one column.
///
/// `permutation` lists row indices in visiting order. Returns the encoded
/// column (in row order) and the full-data statistics.
pub fn ots_encode(
    column: &[&str],
    targets: &[f64],
    permutation: &[usize],
    prior: f64,
    smoothing: f64,
) -> Result<(Vec<f64>, CategoryStats), GbdtError> {
    if column.is_empty() {
        return Err(GbdtError::EmptyColumn);
    }
    if column.len() != targets.len() {
        return Err(GbdtError::LengthMismatch);
    }
    if !is_permutation(permutation, column.len()) {
        return Err(GbdtError::BadPermutation);
    }
    let mut running: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    let mut encoded = vec![0.0; column.len()];
    for &row in permutation {
        let entry = running.entry(column[row]).or_insert((0.0, 0));
        encoded[row] = (entry.0 + smoothing * prior) / (entry.1 as f64 + smoothing);
        entry.0 += targets[row];
        entry.1 += 1;
    }
    let totals = running.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok((encoded, CategoryStats { totals }))
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in p {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}
