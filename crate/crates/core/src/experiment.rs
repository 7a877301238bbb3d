//! In-memory end-to-end run: cube and zoning in, out-of-fold predictions and reports out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{confusion, ConfusionReport};
use crate::grid::{LandUseClass, ZoningGrid};
use crate::ingest::{apply_activity_threshold, ActivityCube, DEFAULT_MIN_TOTAL_EVENTS};
use crate::postprocess::{second_pass, smooth_to_fixpoint, PredictionGrid};
use crate::rforest::{cross_validate, tune_weights, ClassWeights, CvResult, Dataset, ForestParams, Objective, TuneResult, WeightGrid};
use crate::signal::{compute_signals, Signals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    #[default]
    SecondPass,
    Fixpoint,
}

impl std::str::FromStr for Smoothing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Smoothing::None),
            "second_pass" => Ok(Smoothing::SecondPass),
            "fixpoint" => Ok(Smoothing::Fixpoint),
            other => Err(Error::Config(format!("unknown smoothing mode {other:?} (none, second_pass, fixpoint)"))),
        }
    }
}

/// Applies a smoothing mode to raw predictions.
pub fn smooth(raw: &PredictionGrid, mode: Smoothing) -> Result<PredictionGrid> {
    match mode {
        Smoothing::None => Ok(raw.clone()),
        Smoothing::SecondPass => second_pass(raw),
        Smoothing::Fixpoint => smooth_to_fixpoint(raw).map(|(g, _)| g),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub min_total_events: u64,
    pub classes: Vec<LandUseClass>,
    pub forest: ForestParams,
    pub k_folds: usize,
    /// `None` keeps uniform weights.
    pub weight_grid: Option<WeightGrid>,
    pub objective: Objective,
    pub smoothing: Smoothing,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            min_total_events: DEFAULT_MIN_TOTAL_EVENTS,
            classes: LandUseClass::ALL.to_vec(),
            forest: ForestParams::default(),
            k_folds: 5,
            weight_grid: Some(WeightGrid::default()),
            objective: Objective::default(),
            smoothing: Smoothing::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Cells above the activity threshold that carry a zoning label.
    pub active: Vec<usize>,
    pub signals: Signals,
    pub dataset: Dataset,
    pub cv: CvResult,
    pub tuning: Option<TuneResult>,
    pub weights: ClassWeights,
    pub raw: PredictionGrid,
    pub smoothed: PredictionGrid,
    pub raw_report: ConfusionReport,
    pub smoothed_report: ConfusionReport,
}

/// Active cells: over the activity threshold and labeled in `zoning`.
pub fn active_labeled_cells(cube: &ActivityCube, zoning: &ZoningGrid, min_total_events: u64) -> Result<Vec<usize>> {
    if cube.spec != zoning.spec {
        return Err(Error::Consistency("activity cube and zoning grid use different grids".into()));
    }
    let above = apply_activity_threshold(cube, min_total_events);
    let dropped = above.iter().filter(|&&c| zoning.labels[c].is_none()).count();
    if dropped > 0 {
        log::info!("{dropped} active cells have no zoning label and are left out");
    }
    Ok(above.into_iter().filter(|&c| zoning.labels[c].is_some()).collect())
}

/// Threshold, featurize, cross-validate, tune weights, predict out of fold, smooth and score.
pub fn run_experiment(cube: &ActivityCube, zoning: &ZoningGrid, params: &ExperimentParams) -> Result<ExperimentOutcome> {
    let active = active_labeled_cells(cube, zoning, params.min_total_events)?;
    let signals = compute_signals(cube, &active)?;
    let dataset = Dataset::from_features(&signals.features, zoning, &params.classes)?;
    log::info!("{} rows, class counts {:?}", dataset.len(), dataset.class_counts());
    let cv = cross_validate(&dataset, &params.forest, params.k_folds)?;
    let tuning = match &params.weight_grid {
        Some(grid) => Some(tune_weights(&cv, grid, params.objective)?),
        None => None,
    };
    let weights = tuning.as_ref().map_or_else(|| ClassWeights::uniform(dataset.classes.len()), |t| t.weights.clone());
    let classes: Vec<LandUseClass> = cv.predict(&weights).into_iter().map(|k| dataset.classes[k]).collect();
    let raw = PredictionGrid::from_cells(zoning.spec, &dataset.cells, &classes)?;
    let smoothed = smooth(&raw, params.smoothing)?;
    let thresholds = weights.vote_thresholds();
    let raw_report = confusion(zoning, &raw, &dataset.classes)?.with_vote_thresholds(thresholds.clone());
    let smoothed_report = confusion(zoning, &smoothed, &dataset.classes)?.with_vote_thresholds(thresholds);
    Ok(ExperimentOutcome { active, signals, dataset, cv, tuning, weights, raw, smoothed, raw_report, smoothed_report })
}
