//! Neighbour-majority smoothing of predicted labels.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_header, parse_field, GridSpec, LandUseClass};

/// Upper bound on sweeps when smoothing to a fixed point.
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Raw,
    Smoothed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Raw => "raw",
            Provenance::Smoothed => "smoothed",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(Provenance::Raw),
            "smoothed" => Ok(Provenance::Smoothed),
            other => Err(Error::Parse(format!("unknown provenance {other:?}"))),
        }
    }
}

/// Predicted class per cell; `None` marks inactive cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    pub spec: GridSpec,
    pub predicted: Vec<Option<LandUseClass>>,
    pub provenance: Provenance,
}

impl PredictionGrid {
    pub fn raw(spec: GridSpec) -> Self {
        PredictionGrid { spec, predicted: vec![None; spec.n_cells()], provenance: Provenance::Raw }
    }

    pub fn from_cells(spec: GridSpec, cells: &[usize], classes: &[LandUseClass]) -> Result<Self> {
        if cells.len() != classes.len() {
            return Err(Error::Consistency(format!("{} cells but {} predictions", cells.len(), classes.len())));
        }
        let mut pg = PredictionGrid::raw(spec);
        for (&cell, &c) in cells.iter().zip(classes) {
            if cell >= spec.n_cells() {
                return Err(Error::Consistency(format!("prediction for cell {cell} outside grid")));
            }
            pg.predicted[cell] = Some(c);
        }
        Ok(pg)
    }

    pub fn active_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.predicted.iter().enumerate().filter(|(_, p)| p.is_some()).map(|(i, _)| i)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "col", "predicted_code", "provenance"])?;
        let prov = self.provenance.to_string();
        for (i, p) in self.predicted.iter().enumerate() {
            if let Some(c) = p {
                let (r, col) = self.spec.row_col(i);
                wtr.write_record([r.to_string(), col.to_string(), c.code().to_string(), prov.clone()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<prediction csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(spec: GridSpec, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        check_header(rdr.headers()?, &["row", "col", "predicted_code", "provenance"])?;
        let mut pg = PredictionGrid::raw(spec);
        let mut provenance = None;
        for rec in rdr.records() {
            let rec = rec?;
            let row: usize = parse_field(&rec, 0)?;
            let col: usize = parse_field(&rec, 1)?;
            let code: u8 = parse_field(&rec, 2)?;
            let prov: Provenance = parse_field::<String>(&rec, 3)?.parse()?;
            if *provenance.get_or_insert(prov) != prov {
                return Err(Error::Consistency("mixed provenance in one prediction grid".into()));
            }
            if row >= spec.n_rows || col >= spec.n_cols {
                return Err(Error::Consistency(format!("prediction for cell ({row},{col}) outside grid")));
            }
            let class = LandUseClass::from_code(code).ok_or_else(|| Error::Parse(format!("land-use code {code} not in 1..=5")))?;
            pg.predicted[spec.index(row, col)] = Some(class);
        }
        pg.provenance = provenance.unwrap_or(Provenance::Raw);
        Ok(pg)
    }
}

/// Class holding more than half of the active neighbours, if any.
fn neighbor_majority(pg: &PredictionGrid, cell: usize) -> Option<LandUseClass> {
    let (r, c) = pg.spec.row_col(cell);
    let mut counts = [0usize; 5];
    let mut active = 0usize;
    for n in pg.spec.neighbors8(r, c).expect("cell index comes from the grid") {
        if let Some(class) = pg.predicted[n] {
            counts[class.ordinal()] += 1;
            active += 1;
        }
    }
    counts.iter().position(|&k| 2 * k > active).map(|k| LandUseClass::ALL[k])
}

fn sweep(pg: &PredictionGrid) -> (Vec<Option<LandUseClass>>, usize) {
    let next: Vec<Option<LandUseClass>> = (0..pg.predicted.len())
        .into_par_iter()
        .map(|cell| {
            let own = pg.predicted[cell]?;
            Some(neighbor_majority(pg, cell).unwrap_or(own))
        })
        .collect();
    let changed = next.iter().zip(&pg.predicted).filter(|(a, b)| a != b).count();
    (next, changed)
}

/// One synchronous sweep: every active cell whose active neighbours hold a
/// strict majority for a different class takes that class. All decisions
/// read the input grid only.
pub fn second_pass(pg: &PredictionGrid) -> Result<PredictionGrid> {
    if pg.provenance != Provenance::Raw {
        return Err(Error::Argument("second pass expects raw predictions".into()));
    }
    let (predicted, changed) = sweep(pg);
    log::info!("second pass changed {changed} cells");
    Ok(PredictionGrid { spec: pg.spec, predicted, provenance: Provenance::Smoothed })
}

/// Repeats synchronous sweeps until nothing changes or [`MAX_SWEEPS`] is reached.
pub fn smooth_to_fixpoint(pg: &PredictionGrid) -> Result<(PredictionGrid, usize)> {
    let mut cur = PredictionGrid { provenance: Provenance::Raw, ..pg.clone() };
    for k in 1..=MAX_SWEEPS {
        let (predicted, changed) = sweep(&cur);
        cur.predicted = predicted;
        if changed == 0 {
            cur.provenance = Provenance::Smoothed;
            return Ok((cur, k));
        }
    }
    log::warn!("smoothing did not reach a fixed point after {MAX_SWEEPS} sweeps");
    cur.provenance = Provenance::Smoothed;
    Ok((cur, MAX_SWEEPS))
}
