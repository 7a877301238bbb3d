//! Stratified cross-validation and coarse-grid vote-weight tuning.
//!
//! Vote fractions do not depend on the class weights, so the out-of-fold
//! fractions from one cross-validation run are enough to score every weight
//! vector of a grid on identical folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{train_forest_on, ForestParams};
use super::tree::{derive_seed, RankedData};
use super::{weighted_argmax, ClassWeights, Dataset};
use crate::error::{Error, Result};
use crate::grid::LandUseClass;

const FOLD_SEED_DOMAIN: u64 = 0x666f_6c64;
const HOLDOUT_SEED_DOMAIN: u64 = 0x686f_6c64;
const MAX_GRID_POINTS: usize = 1 << 20;

/// Assigns each row to one of `k` folds, shuffling within each class and
/// dealing rows round-robin so every fold gets a near-equal share of each class.
pub fn stratified_folds(y: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("cv.k_folds must be at least 2, got {k}")));
    }
    if k > y.len() {
        return Err(Error::Config(format!("cv.k_folds = {k} exceeds the {} available rows", y.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, FOLD_SEED_DOMAIN));
    let mut folds = vec![0usize; y.len()];
    let mut next = 0usize;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if !members.is_empty() && members.len() < k {
            log::warn!("class index {class} has {} rows for {k} folds; some folds will lack it", members.len());
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Splits rows into (train, test) with about `test_fraction` of each class held out.
pub fn stratified_holdout(y: &[usize], n_classes: usize, test_fraction: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, HOLDOUT_SEED_DOMAIN));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<u32> = (0..y.len() as u32).filter(|&i| y[i as usize] == class).collect();
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Out-of-fold vote fractions for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub classes: Vec<LandUseClass>,
    pub folds: Vec<usize>,
    pub fractions: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
}

impl CvResult {
    /// Predicted class index per row under the given weights.
    pub fn predict(&self, weights: &ClassWeights) -> Vec<usize> {
        self.fractions.iter().map(|f| weighted_argmax(f, &weights.0)).collect()
    }

    pub fn accuracy(&self, weights: &ClassWeights) -> f64 {
        Objective::TotalAccuracy.score(&self.classes, &self.truth, &self.predict(weights))
    }
}

/// Trains one forest per fold on the remaining folds and records the held-out rows' vote fractions.
pub fn cross_validate(ds: &Dataset, params: &ForestParams, k_folds: usize) -> Result<CvResult> {
    let folds = stratified_folds(&ds.y, ds.classes.len(), k_folds, params.master_seed)?;
    let ranked = RankedData::new(ds);
    let mut fractions = vec![Vec::new(); ds.len()];
    for fold in 0..k_folds {
        let train: Vec<u32> = (0..ds.len() as u32).filter(|&i| folds[i as usize] != fold).collect();
        let test: Vec<usize> = (0..ds.len()).filter(|&i| folds[i] == fold).collect();
        let fold_params = ForestParams { master_seed: derive_seed(params.master_seed, fold as u64), ..*params };
        let forest = train_forest_on(&ranked, &ds.classes, &train, &fold_params, ClassWeights::uniform(ds.classes.len()))?;
        let out: Vec<Vec<f64>> = test.par_iter().map(|&i| forest.vote_fractions(ds.row(i))).collect::<Result<_>>()?;
        for (i, f) in test.into_iter().zip(out) {
            fractions[i] = f;
        }
        log::debug!("fold {}/{k_folds} done", fold + 1);
    }
    Ok(CvResult { classes: ds.classes.clone(), folds, fractions, truth: ds.y.clone() })
}

/// Trains on a stratified `1 - test_fraction` share and returns the held-out
/// accuracy under `weights`.
pub fn holdout_evaluate(ds: &Dataset, params: &ForestParams, weights: &ClassWeights, test_fraction: f64) -> Result<f64> {
    let (train, test) = stratified_holdout(&ds.y, ds.classes.len(), test_fraction, params.master_seed)?;
    let ranked = RankedData::new(ds);
    let forest = train_forest_on(&ranked, &ds.classes, &train, params, weights.clone())?;
    let correct = test
        .par_iter()
        .map(|&i| forest.predict(ds.row(i as usize)).map(|p| usize::from(p.class == ds.classes[ds.y[i as usize]])))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / test.len().max(1) as f64)
}

/// Statistic maximized by the weight search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean recall over every class except Residential.
    #[default]
    NonResidentialMacroRecall,
    MacroRecall,
    TotalAccuracy,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "non_residential_macro_recall" => Ok(Objective::NonResidentialMacroRecall),
            "macro_recall" => Ok(Objective::MacroRecall),
            "total_accuracy" => Ok(Objective::TotalAccuracy),
            other => Err(Error::Config(format!("unknown tuning objective {other:?}"))),
        }
    }
}

impl Objective {
    pub fn score(&self, classes: &[LandUseClass], truth: &[usize], pred: &[usize]) -> f64 {
        let n = classes.len();
        let mut hits = vec![0usize; n];
        let mut totals = vec![0usize; n];
        for (&t, &p) in truth.iter().zip(pred) {
            totals[t] += 1;
            if t == p {
                hits[t] += 1;
            }
        }
        match self {
            Objective::TotalAccuracy => hits.iter().sum::<usize>() as f64 / truth.len().max(1) as f64,
            Objective::MacroRecall | Objective::NonResidentialMacroRecall => {
                let skip_res = *self == Objective::NonResidentialMacroRecall
                    && classes.iter().any(|&c| c != LandUseClass::Residential);
                let recalls: Vec<f64> = (0..n)
                    .filter(|&k| totals[k] > 0 && !(skip_res && classes[k] == LandUseClass::Residential))
                    .map(|k| hits[k] as f64 / totals[k] as f64)
                    .collect();
                if recalls.is_empty() {
                    0.0
                } else {
                    recalls.iter().sum::<f64>() / recalls.len() as f64
                }
            }
        }
    }
}

/// Candidate multipliers shared by every class; the grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightGrid {
    pub candidates: Vec<f64>,
}

impl Default for WeightGrid {
    fn default() -> Self {
        WeightGrid { candidates: vec![1.0, 2.0, 3.0, 5.0, 8.0] }
    }
}

impl WeightGrid {
    fn validate(&self, n_classes: usize) -> Result<usize> {
        if self.candidates.is_empty() {
            return Err(Error::Config("weight candidate grid is empty".into()));
        }
        if self.candidates.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config(format!("weight candidates must be positive: {:?}", self.candidates)));
        }
        let size = self
            .candidates
            .len()
            .checked_pow(n_classes as u32)
            .filter(|&s| s <= MAX_GRID_POINTS)
            .ok_or_else(|| Error::Config("weight grid too large".into()))?;
        Ok(size)
    }

    /// Weight vector number `i` in lexicographic order (first class varies slowest).
    pub fn point(&self, i: usize, n_classes: usize) -> ClassWeights {
        let m = self.candidates.len();
        let mut w = vec![0.0; n_classes];
        let mut rest = i;
        for k in (0..n_classes).rev() {
            w[k] = self.candidates[rest % m];
            rest /= m;
        }
        ClassWeights(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub weights: ClassWeights,
    pub objective: Objective,
    pub score: f64,
    pub evaluated: usize,
}

/// Scores every grid point on the cross-validated fractions and returns the best;
/// ties go to the earliest point in lexicographic order.
pub fn tune_weights(cv: &CvResult, grid: &WeightGrid, objective: Objective) -> Result<TuneResult> {
    let n_classes = cv.classes.len();
    let size = grid.validate(n_classes)?;
    let scores: Vec<f64> = (0..size)
        .into_par_iter()
        .map(|i| objective.score(&cv.classes, &cv.truth, &cv.predict(&grid.point(i, n_classes))))
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(TuneResult { weights: grid.point(best, n_classes), objective, score: scores[best], evaluated: size })
}
