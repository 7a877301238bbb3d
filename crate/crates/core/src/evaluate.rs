//! Accuracy, confusion matrices and error-group residual profiles.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{LandUseClass, ZoningGrid};
use crate::postprocess::PredictionGrid;
use crate::signal::{hourly_mean, ResidualSeries, WeekSeries};

/// Row-normalized confusion matrix over a class subset.
///
/// `counts[i][j]` counts cells of true class `classes[i]` predicted as
/// `classes[j]`; `outside[i]` counts those predicted as a class not in the
/// subset. Rows of classes without cells are all zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionReport {
    pub classes: Vec<LandUseClass>,
    pub n_cells: usize,
    pub total_accuracy: f64,
    pub land_share: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vote_thresholds: Option<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub outside: Vec<usize>,
    pub confusion: Vec<Vec<f64>>,
}

impl ConfusionReport {
    pub fn recall(&self, class: LandUseClass) -> Option<f64> {
        let i = self.classes.iter().position(|&c| c == class)?;
        let total: usize = self.counts[i].iter().sum::<usize>() + self.outside[i];
        (total > 0).then(|| self.counts[i][i] as f64 / total as f64)
    }

    /// Mean recall over non-Residential classes that have cells.
    pub fn non_residential_macro_recall(&self) -> f64 {
        let recalls: Vec<f64> = self
            .classes
            .iter()
            .filter(|&&c| c != LandUseClass::Residential)
            .filter_map(|&c| self.recall(c))
            .collect();
        if recalls.is_empty() {
            0.0
        } else {
            recalls.iter().sum::<f64>() / recalls.len() as f64
        }
    }

    pub fn with_vote_thresholds(mut self, thresholds: Vec<f64>) -> Self {
        self.vote_thresholds = Some(thresholds);
        self
    }

    /// Plain-text table: total accuracy, land share, vote thresholds, confusion matrix.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Total Accuracy: {:.2}", self.total_accuracy);
        let _ = writeln!(s, "Cells: {}", self.n_cells);
        let _ = write!(s, "{:<14}", "");
        for c in &self.classes {
            let _ = write!(s, "{:>6}", c.abbrev());
        }
        s.push('\n');
        let _ = write!(s, "{:<14}", "Land Share:");
        for v in &self.land_share {
            let _ = write!(s, "{v:>6.2}");
        }
        s.push('\n');
        if let Some(t) = &self.vote_thresholds {
            let _ = write!(s, "{:<14}", "Vote Thresh:");
            for v in t {
                let _ = write!(s, "{v:>6.2}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "Confusion Matrix");
        for (i, c) in self.classes.iter().enumerate() {
            let _ = write!(s, "{:<14}", c.abbrev());
            for v in &self.confusion[i] {
                let _ = write!(s, "{v:>6.2}");
            }
            s.push('\n');
        }
        s
    }
}

fn evaluated_cells(truth: &ZoningGrid, pred: &PredictionGrid) -> Result<Vec<(usize, LandUseClass, LandUseClass)>> {
    if truth.spec != pred.spec {
        return Err(Error::Consistency("truth and prediction grids differ".into()));
    }
    let mut out = Vec::new();
    let mut unlabeled = 0usize;
    for cell in pred.active_cells() {
        match truth.labels[cell] {
            Some(t) => out.push((cell, t, pred.predicted[cell].expect("active"))),
            None => unlabeled += 1,
        }
    }
    if unlabeled > 0 {
        return Err(Error::Consistency(format!("{unlabeled} predicted cells have no ground-truth label")));
    }
    if out.is_empty() {
        return Err(Error::Consistency("no predicted cells overlap the ground truth".into()));
    }
    Ok(out)
}

/// Confusion matrix over the predicted cells whose true class is in `subset`.
pub fn confusion(truth: &ZoningGrid, pred: &PredictionGrid, subset: &[LandUseClass]) -> Result<ConfusionReport> {
    let mut classes = subset.to_vec();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return Err(Error::Config("class subset is empty".into()));
    }
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    let mut outside = vec![0usize; k];
    for (_, t, p) in evaluated_cells(truth, pred)? {
        let Ok(i) = classes.binary_search(&t) else { continue };
        match classes.binary_search(&p) {
            Ok(j) => counts[i][j] += 1,
            Err(_) => outside[i] += 1,
        }
    }
    let row_totals: Vec<usize> = (0..k).map(|i| counts[i].iter().sum::<usize>() + outside[i]).collect();
    let n_cells: usize = row_totals.iter().sum();
    if n_cells == 0 {
        return Err(Error::Consistency("no evaluated cell has a true class in the subset".into()));
    }
    let confusion = (0..k)
        .map(|i| {
            if row_totals[i] == 0 {
                vec![0.0; k]
            } else {
                counts[i].iter().map(|&c| c as f64 / row_totals[i] as f64).collect()
            }
        })
        .collect();
    let correct: usize = (0..k).map(|i| counts[i][i]).sum();
    Ok(ConfusionReport {
        classes,
        n_cells,
        total_accuracy: correct as f64 / n_cells as f64,
        land_share: row_totals.iter().map(|&t| t as f64 / n_cells as f64).collect(),
        vote_thresholds: None,
        counts,
        outside,
        confusion,
    })
}

/// Accuracy of labeling every cell Residential: the Residential share of the labeled cells.
pub fn naive_baseline(truth: &ZoningGrid) -> f64 {
    let shares = truth.class_shares();
    if shares.labeled == 0 {
        return 0.0;
    }
    shares.count(LandUseClass::Residential) as f64 / shares.labeled as f64
}

/// Same as [`naive_baseline`] restricted to the predicted cells.
pub fn naive_baseline_on(truth: &ZoningGrid, pred: &PredictionGrid) -> Result<f64> {
    let cells = evaluated_cells(truth, pred)?;
    let res = cells.iter().filter(|(_, t, _)| *t == LandUseClass::Residential).count();
    Ok(res as f64 / cells.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorGroup {
    /// Focal cells predicted focal.
    I,
    /// Non-focal cells predicted focal.
    II,
    /// Focal cells predicted as something else.
    III,
}

impl ErrorGroup {
    pub fn classify(focal: LandUseClass, truth: LandUseClass, pred: LandUseClass) -> Option<ErrorGroup> {
        match (truth == focal, pred == focal) {
            (true, true) => Some(ErrorGroup::I),
            (false, true) => Some(ErrorGroup::II),
            (true, false) => Some(ErrorGroup::III),
            (false, false) => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorGroup::I => "I",
            ErrorGroup::II => "II",
            ErrorGroup::III => "III",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupProfile {
    pub group: ErrorGroup,
    pub cells: Vec<usize>,
    /// Mean residual series; `None` for an empty group.
    pub mean_residual: Option<WeekSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGroupProfiles {
    pub focal: LandUseClass,
    pub groups: [GroupProfile; 3],
}

impl ErrorGroupProfiles {
    pub fn group(&self, g: ErrorGroup) -> &GroupProfile {
        &self.groups[g as usize]
    }

    /// Writes `group,hour_of_week,mean_residual,count`; an empty group is one row with blank series fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["group", "hour_of_week", "mean_residual", "count"])?;
        for g in &self.groups {
            let count = g.cells.len().to_string();
            match &g.mean_residual {
                Some(series) => {
                    for (t, v) in series.iter().enumerate() {
                        wtr.write_record([g.group.label(), &t.to_string(), &v.to_string(), &count])?;
                    }
                }
                None => wtr.write_record([g.group.label(), "", "", &count])?,
            }
        }
        wtr.flush().map_err(|e| Error::io("<error groups csv>", e))?;
        Ok(())
    }
}

/// Splits predicted cells into groups I/II/III relative to `focal` and averages their residuals.
pub fn error_groups(
    truth: &ZoningGrid,
    pred: &PredictionGrid,
    rs: &ResidualSeries,
    focal: LandUseClass,
) -> Result<ErrorGroupProfiles> {
    let mut members: [Vec<usize>; 3] = Default::default();
    for (cell, t, p) in evaluated_cells(truth, pred)? {
        if let Some(g) = ErrorGroup::classify(focal, t, p) {
            members[g as usize].push(cell);
        }
    }
    let profile = |group: ErrorGroup, cells: Vec<usize>| -> Result<GroupProfile> {
        let mut series = Vec::with_capacity(cells.len());
        for &c in &cells {
            let pos = rs
                .position(c)
                .ok_or_else(|| Error::Consistency(format!("no residual series for predicted cell {c}")))?;
            series.push(&rs.values[pos]);
        }
        Ok(GroupProfile { group, mean_residual: hourly_mean(series), cells })
    };
    let [i, ii, iii] = members;
    Ok(ErrorGroupProfiles {
        focal,
        groups: [profile(ErrorGroup::I, i)?, profile(ErrorGroup::II, ii)?, profile(ErrorGroup::III, iii)?],
    })
}
