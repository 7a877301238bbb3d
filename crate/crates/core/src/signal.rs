//! Normalized and residual activity series, class-average profiles and the
//! per-cell feature vectors.
//!
//! The order of operations is fixed: z-score each cell over its full
//! 168-hour week, subtract the hour-by-hour mean over all active cells, and
//! only then collapse the week into an average weekday and weekend day.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{check_header, parse_field, GridSpec, LandUseClass, ZoningGrid};
use crate::ingest::{ActivityCube, HOURS_PER_DAY, HOURS_PER_WEEK};

pub const N_FEATURES: usize = 49;
const WEEKDAYS: usize = 5;
const WEEKEND_DAYS: usize = 2;

pub type WeekSeries = [f64; HOURS_PER_WEEK];
pub type FeatureRow = [f64; N_FEATURES];

/// Kahan-Babuska (Neumaier) running sum; result is independent of how the
/// caller schedules work as long as terms arrive in the same order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn mean_std(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mut s = NeumaierSum::default();
    series.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n;
    let mut ss = NeumaierSum::default();
    series.iter().for_each(|&v| ss.add((v - mean) * (v - mean)));
    (mean, (ss.value() / n).sqrt())
}

/// Z-scored weekly series for the active cells that have non-zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub cells: Vec<usize>,
    pub values: Vec<WeekSeries>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Active cells dropped for having a constant series.
    pub excluded: Vec<usize>,
}

/// Normalizes each active cell's series to zero mean and unit (population) standard deviation.
pub fn zscore(cube: &ActivityCube, active: &[usize]) -> Result<NormalizedSeries> {
    if let Some(&bad) = active.iter().find(|&&c| c >= cube.spec.n_cells()) {
        return Err(Error::Argument(format!("active cell {bad} outside the grid")));
    }
    let per_cell: Vec<Option<(WeekSeries, f64, f64)>> = active
        .par_iter()
        .map(|&cell| {
            let series = cube.series(cell);
            let (mu, sigma) = mean_std(series);
            // A constant series can leave rounding-level spread behind; treat it as zero.
            if !(sigma > 1e-12 * mu.abs().max(f64::MIN_POSITIVE)) {
                return None;
            }
            let mut out = [0.0; HOURS_PER_WEEK];
            for (o, &v) in out.iter_mut().zip(series) {
                *o = (v - mu) / sigma;
            }
            Some((out, mu, sigma))
        })
        .collect();

    let mut ns = NormalizedSeries {
        cells: Vec::with_capacity(active.len()),
        values: Vec::with_capacity(active.len()),
        mean: Vec::with_capacity(active.len()),
        std: Vec::with_capacity(active.len()),
        excluded: Vec::new(),
    };
    for (&cell, r) in active.iter().zip(per_cell) {
        match r {
            Some((v, mu, sigma)) => {
                ns.cells.push(cell);
                ns.values.push(v);
                ns.mean.push(mu);
                ns.std.push(sigma);
            }
            None => ns.excluded.push(cell),
        }
    }
    if !ns.excluded.is_empty() {
        log::warn!("{} active cells have zero variance and were excluded", ns.excluded.len());
    }
    Ok(ns)
}

/// Normalized activity minus the hour-by-hour mean over all active cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub cells: Vec<usize>,
    pub values: Vec<WeekSeries>,
    pub spatial_mean: WeekSeries,
}

impl ResidualSeries {
    pub fn position(&self, cell: usize) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }
}

/// Hour-by-hour compensated mean over a list of series, in list order.
pub(crate) fn hourly_mean<'a, I>(series: I) -> Option<WeekSeries>
where
    I: IntoIterator<Item = &'a WeekSeries>,
{
    let mut sums = [NeumaierSum::default(); HOURS_PER_WEEK];
    let mut n = 0usize;
    for s in series {
        for (acc, &v) in sums.iter_mut().zip(s.iter()) {
            acc.add(v);
        }
        n += 1;
    }
    (n > 0).then(|| std::array::from_fn(|t| sums[t].value() / n as f64))
}

pub fn residual(ns: &NormalizedSeries) -> ResidualSeries {
    if ns.cells.len() < 2 {
        log::warn!("{} active cell(s): residual activity is degenerate", ns.cells.len());
    }
    let spatial_mean = hourly_mean(&ns.values).unwrap_or([0.0; HOURS_PER_WEEK]);
    let values = ns
        .values
        .par_iter()
        .map(|s| std::array::from_fn(|t| s[t] - spatial_mean[t]))
        .collect();
    ResidualSeries { cells: ns.cells.clone(), values, spatial_mean }
}

/// Per-cell feature vectors: 24 weekday residual hours, 24 weekend residual
/// hours, then mean absolute events per day.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub spec: GridSpec,
    pub cells: Vec<usize>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_col(&self, i: usize) -> (usize, usize) {
        self.spec.row_col(self.cells[i])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["row".to_string(), "col".to_string()];
        header.extend((1..=N_FEATURES).map(|k| format!("f{k:02}")));
        wtr.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let (r, c) = self.row_col(i);
            let mut rec = vec![r.to_string(), c.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<features csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(spec: GridSpec, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut expected = vec!["row".to_string(), "col".to_string()];
        expected.extend((1..=N_FEATURES).map(|k| format!("f{k:02}")));
        let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
        check_header(rdr.headers()?, &expected)?;
        let mut fm = FeatureMatrix { spec, cells: Vec::new(), rows: Vec::new() };
        for rec in rdr.records() {
            let rec = rec?;
            let r: usize = parse_field(&rec, 0)?;
            let c: usize = parse_field(&rec, 1)?;
            if r >= spec.n_rows || c >= spec.n_cols {
                return Err(Error::Consistency(format!("feature row for cell ({r},{c}) outside grid")));
            }
            let mut row = [0.0; N_FEATURES];
            for (k, v) in row.iter_mut().enumerate() {
                *v = parse_field(&rec, k + 2)?;
            }
            fm.cells.push(spec.index(r, c));
            fm.rows.push(row);
        }
        if fm.cells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Consistency("feature rows must be in ascending cell order without duplicates".into()));
        }
        Ok(fm)
    }
}

fn feature_row(abs: &[f64], res: &WeekSeries) -> FeatureRow {
    let mut row = [0.0; N_FEATURES];
    for h in 0..HOURS_PER_DAY {
        let weekday: f64 = (0..WEEKDAYS).map(|d| res[d * HOURS_PER_DAY + h]).sum();
        let weekend: f64 = (WEEKDAYS..WEEKDAYS + WEEKEND_DAYS).map(|d| res[d * HOURS_PER_DAY + h]).sum();
        row[h] = weekday / WEEKDAYS as f64;
        row[HOURS_PER_DAY + h] = weekend / WEEKEND_DAYS as f64;
    }
    let total: f64 = abs.iter().sum();
    row[N_FEATURES - 1] = total / 7.0;
    row
}

pub fn build_features(cube: &ActivityCube, rs: &ResidualSeries, active: &[usize]) -> Result<FeatureMatrix> {
    if rs.cells.as_slice() != active {
        return Err(Error::Consistency(format!(
            "residual series cover {} cells but the active set has {}; sets must match exactly",
            rs.cells.len(),
            active.len()
        )));
    }
    let rows = rs
        .cells
        .par_iter()
        .zip(rs.values.par_iter())
        .map(|(&cell, res)| feature_row(cube.series(cell), res))
        .collect();
    Ok(FeatureMatrix { spec: cube.spec, cells: rs.cells.clone(), rows })
}

/// Output of the full signal chain for one cube.
#[derive(Debug, Clone)]
pub struct Signals {
    pub normalized: NormalizedSeries,
    pub residual: ResidualSeries,
    pub features: FeatureMatrix,
}

/// Runs z-score, residual and featurization over `active` (zero-variance cells drop out).
pub fn compute_signals(cube: &ActivityCube, active: &[usize]) -> Result<Signals> {
    let normalized = zscore(cube, active)?;
    let residual = residual(&normalized);
    let features = build_features(cube, &residual, &normalized.cells)?;
    Ok(Signals { normalized, residual, features })
}

/// Mean absolute, normalized and residual series over the active cells of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub class: LandUseClass,
    pub n_cells: usize,
    pub mean_abs: WeekSeries,
    pub mean_norm: WeekSeries,
    pub mean_res: WeekSeries,
}

pub fn class_average_profiles(
    cube: &ActivityCube,
    ns: &NormalizedSeries,
    rs: &ResidualSeries,
    zoning: &ZoningGrid,
) -> Result<Vec<ClassProfile>> {
    if ns.cells != rs.cells {
        return Err(Error::Consistency("normalized and residual series cover different cells".into()));
    }
    let unlabeled: Vec<usize> = rs.cells.iter().copied().filter(|&c| zoning.labels[c].is_none()).collect();
    if !unlabeled.is_empty() {
        return Err(Error::Consistency(format!(
            "{} active cells have no zoning label, first {:?}",
            unlabeled.len(),
            &unlabeled[..unlabeled.len().min(10)]
        )));
    }
    let mut out = Vec::new();
    for class in LandUseClass::ALL {
        let members: Vec<usize> = (0..rs.cells.len()).filter(|&i| zoning.labels[rs.cells[i]] == Some(class)).collect();
        if members.is_empty() {
            log::info!("no active cells of class {class}; profile omitted");
            continue;
        }
        let abs: Vec<WeekSeries> = members
            .iter()
            .map(|&i| cube.series(rs.cells[i]).try_into().expect("168-hour series"))
            .collect();
        out.push(ClassProfile {
            class,
            n_cells: members.len(),
            mean_abs: hourly_mean(&abs).expect("non-empty"),
            mean_norm: hourly_mean(members.iter().map(|&i| &ns.values[i])).expect("non-empty"),
            mean_res: hourly_mean(members.iter().map(|&i| &rs.values[i])).expect("non-empty"),
        });
    }
    Ok(out)
}

/// Writes `class,hour_of_week,mean_abs,mean_norm,mean_res`.
pub fn write_profiles_csv<W: Write>(profiles: &[ClassProfile], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["class", "hour_of_week", "mean_abs", "mean_norm", "mean_res"])?;
    for p in profiles {
        for t in 0..HOURS_PER_WEEK {
            wtr.write_record([
                p.class.name().to_string(),
                t.to_string(),
                p.mean_abs[t].to_string(),
                p.mean_norm[t].to_string(),
                p.mean_res[t].to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<profiles csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ObservationWindow;
    use chrono::NaiveDate;

    fn window() -> ObservationWindow {
        ObservationWindow::from_days(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 21).unwrap()
    }

    fn cube_from(series: &[Vec<f64>]) -> ActivityCube {
        let spec = GridSpec::new(0.0, 0.0, 200.0, 1, series.len()).unwrap();
        ActivityCube::from_averages(spec, window(), series.concat()).unwrap()
    }

    fn ramp(scale: f64, offset: f64) -> Vec<f64> {
        (0..HOURS_PER_WEEK).map(|t| offset + scale * ((t * 7919) % 53) as f64).collect()
    }

    #[test]
    fn toy_zscore_hand_arithmetic() {
        let (mu, sigma) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(mu, 2.0);
        assert!((sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|v| (v - mu) / sigma).collect();
        assert!((z[0] + 1.224744871391589).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert!((z[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_excluded() {
        let cube = cube_from(&[vec![4.0; HOURS_PER_WEEK], ramp(1.0, 0.0), vec![0.1; HOURS_PER_WEEK]]);
        let ns = zscore(&cube, &[0, 1, 2]).unwrap();
        assert_eq!(ns.cells, vec![1]);
        assert_eq!(ns.excluded, vec![0, 2]);
    }

    #[test]
    fn normalized_moments() {
        let cube = cube_from(&[ramp(1.0, 0.0), ramp(3.5, 10.0)]);
        let ns = zscore(&cube, &[0, 1]).unwrap();
        for v in &ns.values {
            let (m, s) = mean_std(v);
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_cells_have_zero_residual() {
        let cube = cube_from(&[ramp(1.0, 2.0), ramp(1.0, 2.0)]);
        let rs = residual(&zscore(&cube, &[0, 1]).unwrap());
        assert!(rs.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_residual_is_zero() {
        let cube = cube_from(&[ramp(1.0, 2.0)]);
        let rs = residual(&zscore(&cube, &[0]).unwrap());
        assert!(rs.values[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_cell_residual_hand_arithmetic() {
        let mk = |a: f64, b: f64, c: f64| NormalizedSeries {
            cells: vec![0, 1, 2],
            values: vec![[a; HOURS_PER_WEEK], [b; HOURS_PER_WEEK], [c; HOURS_PER_WEEK]],
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
            excluded: vec![],
        };
        for (a, b, c) in [(1.0, 0.0, -1.0), (2.0, 1.0, 0.0)] {
            let rs = residual(&mk(a, b, c));
            assert_eq!(rs.values[0][7], 1.0);
            assert_eq!(rs.values[1][7], 0.0);
            assert_eq!(rs.values[2][7], -1.0);
        }
    }

    #[test]
    fn feature_layout() {
        let cube = cube_from(&[vec![1.0; HOURS_PER_WEEK]]);
        let rs = ResidualSeries { cells: vec![0], values: vec![[0.25; HOURS_PER_WEEK]], spatial_mean: [0.0; HOURS_PER_WEEK] };
        let fm = build_features(&cube, &rs, &[0]).unwrap();
        assert_eq!(fm.rows[0].len(), N_FEATURES);
        assert!(fm.rows[0][..48].iter().all(|&v| v == 0.25));
        // 24 events per day spread evenly.
        assert_eq!(fm.rows[0][48], 24.0);
        assert!(matches!(build_features(&cube, &rs, &[]), Err(Error::Consistency(_))));
    }

    #[test]
    fn weekday_and_weekend_profiles_are_separate() {
        let mut res = [0.0; HOURS_PER_WEEK];
        for d in 0..7 {
            for h in 0..24 {
                res[d * 24 + h] = if d < 5 { h as f64 } else { -(h as f64) } + d as f64;
            }
        }
        let row = feature_row(&[0.0; HOURS_PER_WEEK], &res);
        for h in 0..24 {
            assert_eq!(row[h], h as f64 + 2.0);
            assert_eq!(row[24 + h], -(h as f64) + 5.5);
        }
    }

    #[test]
    fn class_profiles_average_members() {
        let cube = cube_from(&[ramp(1.0, 0.0), ramp(1.0, 0.0), ramp(-1.0, 60.0), ramp(-1.0, 60.0)]);
        let s = compute_signals(&cube, &[0, 1, 2, 3]).unwrap();
        let mut zg = ZoningGrid::unlabeled(cube.spec);
        zg.labels = vec![Some(LandUseClass::Residential), Some(LandUseClass::Residential), Some(LandUseClass::Commercial), Some(LandUseClass::Commercial)];
        let profiles = class_average_profiles(&cube, &s.normalized, &s.residual, &zg).unwrap();
        assert_eq!(profiles.len(), 2);
        assert_eq!(profiles[0].mean_res, s.residual.values[0]);
        for t in 0..HOURS_PER_WEEK {
            assert!((profiles[0].mean_res[t] + profiles[1].mean_res[t]).abs() < 1e-12);
        }
        zg.labels[3] = None;
        assert!(class_average_profiles(&cube, &s.normalized, &s.residual, &zg).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let cube = cube_from(&[ramp(1.0, 0.0), ramp(2.0, 1.0), ramp(0.5, 3.0)]);
        let s = compute_signals(&cube, &[0, 2]).unwrap();
        let mut buf = Vec::new();
        s.features.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(cube.spec, buf.as_slice()).unwrap();
        assert_eq!(back, s.features);
    }
}
