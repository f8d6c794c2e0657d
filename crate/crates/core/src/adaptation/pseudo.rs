//! Confidence ranking and pseudo-label selection.

use serde::{Deserialize, Serialize};

use super::objectives::{check_distribution, entropy};
use crate::error::{Result, VdaError};
use crate::linalg::Matrix;
use crate::models::{argmax, predict_probs, ModelBundle};

/// The most confident target samples with the model's own predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub sample_indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub entropies: Vec<f64>,
    pub r_percent: f64,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }

    /// Fraction of pseudo-labels equal to `truth[index]`.
    pub fn agreement(&self, truth: &[usize]) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = self
            .sample_indices
            .iter()
            .zip(&self.labels)
            .filter(|(&i, &l)| truth[i] == l)
            .count();
        hits as f64 / self.len() as f64
    }
}

/// `⌊r/100 · n⌋`, at least 1 when `n ≥ 1`.
pub fn selection_size(n: usize, r_percent: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // r·n is exact for integral r, so the division rounds once
    let k = (r_percent * n as f64 / 100.0).floor() as usize;
    k.clamp(1, n)
}

/// Indices ordered by ascending entropy; ties keep the original order.
pub fn rank_by_entropy(entropies: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entropies.len()).collect();
    order.sort_by(|&a, &b| entropies[a].total_cmp(&entropies[b]).then(a.cmp(&b)));
    order
}

/// Most certain (lowest entropy) first.
pub fn rank_by_certainty(probs: &Matrix) -> Result<Vec<usize>> {
    let entropies = row_entropies(probs)?;
    Ok(rank_by_entropy(&entropies))
}

fn row_entropies(probs: &Matrix) -> Result<Vec<f64>> {
    probs
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            check_distribution(row, i)?;
            Ok(entropy(row))
        })
        .collect()
}

/// Selection from precomputed class probabilities.
pub fn select_from_probs(probs: &Matrix, r_percent: f64) -> Result<PseudoLabelSet> {
    if !(r_percent > 0.0 && r_percent <= 100.0) {
        return Err(VdaError::Parameter(format!("r_percent must lie in (0, 100], got {r_percent}")));
    }
    if probs.rows() == 0 {
        return Err(VdaError::Shape("no target samples to select from".into()));
    }
    let entropies = row_entropies(probs)?;
    let order = rank_by_entropy(&entropies);
    let keep = selection_size(probs.rows(), r_percent);
    let sample_indices: Vec<usize> = order[..keep].to_vec();
    Ok(PseudoLabelSet {
        labels: sample_indices.iter().map(|&i| argmax(probs.row(i))).collect(),
        entropies: sample_indices.iter().map(|&i| entropies[i]).collect(),
        sample_indices,
        r_percent,
    })
}

/// Picks the `r%` lowest-entropy target samples under the current model and
/// labels them with its argmax prediction.
pub fn select_confident(bundle: &ModelBundle, target: &Matrix, r_percent: f64) -> Result<PseudoLabelSet> {
    select_from_probs(&predict_probs(bundle, target)?, r_percent)
}
