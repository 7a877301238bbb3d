//! Random-forest classification with class-weighted voting.
//!
//! Each tree votes for the plurality class of the leaf a row lands in. The
//! forest turns votes into raw fractions, multiplies each class's fraction by
//! its weight and predicts the argmax, ties going to the lower category code.
//! Weights follow the vote-threshold convention `w_c = 1 / threshold_c`: a
//! class that needs a smaller share of the votes gets a larger multiplier.

mod cv;
mod forest;
mod tree;

pub use cv::{
    cross_validate, holdout_evaluate, stratified_folds, stratified_holdout, tune_weights, CvResult, Objective,
    TuneResult, WeightGrid,
};
pub use forest::{predict_matrix, train_forest, train_forest_on, Forest, ForestParams, Prediction, VoteTally};
pub use tree::{bootstrap_sample, derive_seed, grow, train_tree, RankedData, Tree, TreeNode, TreeParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LandUseClass, ZoningGrid};
use crate::signal::FeatureMatrix;

/// Labeled rows. `y[i]` indexes into `classes`, which is sorted by category code.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    x: Vec<f64>,
    pub y: Vec<usize>,
    pub classes: Vec<LandUseClass>,
    /// Grid cell of each row when built from a feature matrix.
    pub cells: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<usize>, classes: Vec<LandUseClass>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Argument(format!("{} rows but {} labels", x.len(), y.len())));
        }
        let n_features = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != n_features) {
            return Err(Error::Argument("rows have differing widths".into()));
        }
        if classes.is_empty() || classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("classes must be non-empty, unique and sorted by code".into()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes.len()) {
            return Err(Error::Argument(format!("label index {bad} out of range")));
        }
        let cells = (0..x.len()).collect();
        Ok(Dataset { n_features, x: x.concat(), y, classes, cells })
    }

    /// Pairs feature rows with zoning labels, keeping only rows whose class is in `subset`.
    ///
    /// Every feature row must carry a label; unlabeled rows are a consistency error.
    pub fn from_features(fm: &FeatureMatrix, zoning: &ZoningGrid, subset: &[LandUseClass]) -> Result<Self> {
        if fm.spec != zoning.spec {
            return Err(Error::Consistency("feature matrix and zoning grid use different grids".into()));
        }
        let unlabeled: Vec<(usize, usize)> = fm
            .cells
            .iter()
            .filter(|&&c| zoning.labels[c].is_none())
            .map(|&c| fm.spec.row_col(c))
            .collect();
        if !unlabeled.is_empty() {
            return Err(Error::Consistency(format!(
                "{} feature rows have no zoning label: {:?}{}",
                unlabeled.len(),
                &unlabeled[..unlabeled.len().min(10)],
                if unlabeled.len() > 10 { " ..." } else { "" }
            )));
        }
        let mut classes: Vec<LandUseClass> = subset.to_vec();
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::Config("class subset is empty".into()));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut cells = Vec::new();
        for (row, &cell) in fm.rows.iter().zip(&fm.cells) {
            let label = zoning.labels[cell].expect("checked above");
            if let Ok(k) = classes.binary_search(&label) {
                x.extend_from_slice(row);
                y.push(k);
                cells.push(cell);
            }
        }
        Ok(Dataset { n_features: crate::signal::N_FEATURES, x, y, classes, cells })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.x[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }
}

/// Per-class vote multipliers, aligned with a forest's class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(n: usize) -> Self {
        ClassWeights(vec![1.0; n])
    }

    /// `w_c = 1 / threshold_c`.
    pub fn from_vote_thresholds(thresholds: &[f64]) -> Result<Self> {
        let w = thresholds.iter().map(|t| 1.0 / t).collect();
        let weights = ClassWeights(w);
        weights.validate(thresholds.len())?;
        Ok(weights)
    }

    /// Thresholds `1/w_c`, rescaled to sum to one.
    pub fn vote_thresholds(&self) -> Vec<f64> {
        let inv: Vec<f64> = self.0.iter().map(|w| 1.0 / w).collect();
        let total: f64 = inv.iter().sum();
        inv.iter().map(|t| t / total).collect()
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.0.len() != n_classes {
            return Err(Error::Config(format!("{} weights for {} classes", self.0.len(), n_classes)));
        }
        if self.0.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config(format!("weights must be finite and positive: {:?}", self.0)));
        }
        Ok(())
    }
}

/// Argmax of `fractions[c] * weights[c]`; exact ties go to the lower index.
pub fn weighted_argmax(fractions: &[f64], weights: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = fractions[0] * weights[0];
    for k in 1..fractions.len() {
        let s = fractions[k] * weights[k];
        if s > best_score {
            best = k;
            best_score = s;
        }
    }
    best
}
