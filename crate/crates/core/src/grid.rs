//! Uniform analysis lattice, land-use classes and per-cell zoning labels.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lattice resolution in meters.
pub const DEFAULT_CELL_SIZE: f64 = 200.0;

/// Geometry of a regular lattice in planar meters.
///
/// Cell `(row, col)` covers the half-open rectangle
/// `[origin_x + col*cell_size, origin_x + (col+1)*cell_size) x
///  [origin_y + row*cell_size, origin_y + (row+1)*cell_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, n_rows: usize, n_cols: usize) -> Result<Self> {
        let spec = GridSpec { origin_x, origin_y, cell_size, n_rows, n_cols };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Config(format!("grid.cell_size must be positive, got {}", self.cell_size)));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::Config(format!(
                "grid must have at least one row and column, got {}x{}",
                self.n_rows, self.n_cols
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    #[inline]
    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.n_cols, index % self.n_cols)
    }

    pub fn cell_rect(&self, row: usize, col: usize) -> Rect {
        let min_x = self.origin_x + col as f64 * self.cell_size;
        let min_y = self.origin_y + row as f64 * self.cell_size;
        Rect { min_x, min_y, max_x: min_x + self.cell_size, max_y: min_y + self.cell_size }
    }

    pub fn extent(&self) -> Rect {
        Rect {
            min_x: self.origin_x,
            min_y: self.origin_y,
            max_x: self.origin_x + self.n_cols as f64 * self.cell_size,
            max_y: self.origin_y + self.n_rows as f64 * self.cell_size,
        }
    }

    /// Cell containing a point, or `None` outside the lattice.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !x.is_finite() || !y.is_finite() {
            return None;
        }
        let fx = ((x - self.origin_x) / self.cell_size).floor();
        let fy = ((y - self.origin_y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.n_cols as f64 || fy >= self.n_rows as f64 {
            return None;
        }
        Some((fy as usize, fx as usize))
    }

    /// In-bounds Moore neighbourhood of `(row, col)` as flat indices, row-major.
    pub fn neighbors8(&self, row: usize, col: usize) -> Result<Vec<usize>> {
        if row >= self.n_rows || col >= self.n_cols {
            return Err(Error::Argument(format!(
                "cell ({row},{col}) outside {}x{} grid",
                self.n_rows, self.n_cols
            )));
        }
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                if r >= 0 && c >= 0 && (r as usize) < self.n_rows && (c as usize) < self.n_cols {
                    out.push(self.index(r as usize, c as usize));
                }
            }
        }
        Ok(out)
    }
}

/// Zoning category. Codes are fixed: 1 Residential .. 5 Other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum LandUseClass {
    Residential = 1,
    Commercial = 2,
    Industrial = 3,
    Parks = 4,
    Other = 5,
}

impl LandUseClass {
    pub const ALL: [LandUseClass; 5] = [
        LandUseClass::Residential,
        LandUseClass::Commercial,
        LandUseClass::Industrial,
        LandUseClass::Parks,
        LandUseClass::Other,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position in [`LandUseClass::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(LandUseClass::Residential),
            2 => Some(LandUseClass::Commercial),
            3 => Some(LandUseClass::Industrial),
            4 => Some(LandUseClass::Parks),
            5 => Some(LandUseClass::Other),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LandUseClass::Residential => "Residential",
            LandUseClass::Commercial => "Commercial",
            LandUseClass::Industrial => "Industrial",
            LandUseClass::Parks => "Parks",
            LandUseClass::Other => "Other",
        }
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            LandUseClass::Residential => "Res",
            LandUseClass::Commercial => "Com",
            LandUseClass::Industrial => "Ind",
            LandUseClass::Parks => "Prk",
            LandUseClass::Other => "Oth",
        }
    }
}

impl From<LandUseClass> for u8 {
    fn from(c: LandUseClass) -> u8 {
        c.code()
    }
}

impl TryFrom<u8> for LandUseClass {
    type Error = String;
    fn try_from(code: u8) -> std::result::Result<Self, String> {
        LandUseClass::from_code(code).ok_or_else(|| format!("land-use code {code} not in 1..=5"))
    }
}

impl fmt::Display for LandUseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandUseClass {
    type Err = Error;

    /// Accepts a class name, its three-letter abbreviation (any case) or the integer code.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(code) = t.parse::<u8>() {
            return LandUseClass::from_code(code)
                .ok_or_else(|| Error::Parse(format!("land-use code {code} not in 1..=5")));
        }
        LandUseClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(t) || c.abbrev().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Parse(format!("unknown land-use class {t:?}")))
    }
}

/// Per-cell zoning labels on a lattice. `None` means the cell is unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoningGrid {
    pub spec: GridSpec,
    pub labels: Vec<Option<LandUseClass>>,
}

/// Per-class cell counts and percentages over labeled cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassShares {
    pub counts: [usize; 5],
    pub percentages: [f64; 5],
    pub labeled: usize,
}

impl ClassShares {
    pub fn count(&self, class: LandUseClass) -> usize {
        self.counts[class.ordinal()]
    }

    pub fn percentage(&self, class: LandUseClass) -> f64 {
        self.percentages[class.ordinal()]
    }
}

impl ZoningGrid {
    pub fn unlabeled(spec: GridSpec) -> Self {
        ZoningGrid { spec, labels: vec![None; spec.n_cells()] }
    }

    pub fn from_labels(spec: GridSpec, labels: Vec<Option<LandUseClass>>) -> Result<Self> {
        if labels.len() != spec.n_cells() {
            return Err(Error::Consistency(format!(
                "label array has {} entries, grid has {} cells",
                labels.len(),
                spec.n_cells()
            )));
        }
        Ok(ZoningGrid { spec, labels })
    }

    pub fn get(&self, row: usize, col: usize) -> Option<LandUseClass> {
        self.labels[self.spec.index(row, col)]
    }

    pub fn class_shares(&self) -> ClassShares {
        let mut counts = [0usize; 5];
        for c in self.labels.iter().flatten() {
            counts[c.ordinal()] += 1;
        }
        let labeled: usize = counts.iter().sum();
        let mut percentages = [0.0; 5];
        if labeled > 0 {
            for (p, &n) in percentages.iter_mut().zip(&counts) {
                *p = 100.0 * n as f64 / labeled as f64;
            }
        }
        ClassShares { counts, percentages, labeled }
    }

    /// Writes `row,col,land_use_code`, skipping unlabeled cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "col", "land_use_code"])?;
        for (idx, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                let (r, col) = self.spec.row_col(idx);
                wtr.write_record([r.to_string(), col.to_string(), c.code().to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<zoning csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(spec: GridSpec, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        check_header(rdr.headers()?, &["row", "col", "land_use_code"])?;
        let mut grid = ZoningGrid::unlabeled(spec);
        for rec in rdr.records() {
            let rec = rec?;
            let row: usize = parse_field(&rec, 0)?;
            let col: usize = parse_field(&rec, 1)?;
            let code: u8 = parse_field(&rec, 2)?;
            if row >= spec.n_rows || col >= spec.n_cols {
                return Err(Error::Consistency(format!("zoning cell ({row},{col}) outside grid")));
            }
            let class = LandUseClass::from_code(code)
                .ok_or_else(|| Error::Parse(format!("land-use code {code} not in 1..=5")))?;
            grid.labels[spec.index(row, col)] = Some(class);
        }
        Ok(grid)
    }
}

pub(crate) fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::Parse(format!("expected CSV header {expected:?}, got {got:?}")));
    }
    Ok(())
}

pub(crate) fn parse_field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse(format!("missing column {i} in {rec:?}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse column {i} value {raw:?}")))
}
