//! Streaming aggregation of point events into per-cell hour-of-week averages.

use std::borrow::Borrow;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_header, parse_field, GridSpec};

pub const HOURS_PER_DAY: usize = 24;
pub const DAYS_PER_WEEK: usize = 7;
pub const HOURS_PER_WEEK: usize = HOURS_PER_DAY * DAYS_PER_WEEK;

/// Largest tolerated fraction of unparseable event rows.
pub const MAX_SKIP_FRACTION: f64 = 0.01;

/// Default minimum number of events over the window for a cell to be active.
pub const DEFAULT_MIN_TOTAL_EVENTS: u64 = 50;

const PARSE_BATCH: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityEvent {
    pub timestamp: DateTime<FixedOffset>,
    pub x: f64,
    pub y: f64,
}

impl ActivityEvent {
    /// Hour-of-week slot in local wall-clock time; Monday 00:00 is slot 0.
    pub fn slot(&self) -> usize {
        let local = self.timestamp.naive_local();
        local.weekday().num_days_from_monday() as usize * HOURS_PER_DAY + local.hour() as usize
    }

    pub fn local_date(&self) -> NaiveDate {
        self.timestamp.naive_local().date()
    }
}

/// Calendar dates `[start, end)` in local time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl ObservationWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let w = ObservationWindow { start, end };
        if w.n_days() < DAYS_PER_WEEK as i64 {
            return Err(Error::Config(format!(
                "observation window {start}..{end} spans {} days; at least 7 are required",
                w.n_days()
            )));
        }
        Ok(w)
    }

    pub fn from_days(start: NaiveDate, days: u32) -> Result<Self> {
        let end = start
            .checked_add_days(chrono::Days::new(days as u64))
            .ok_or_else(|| Error::Config("observation window end out of range".into()))?;
        Self::new(start, end)
    }

    pub fn n_days(&self) -> i64 {
        (self.end - self.start).num_days()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date < self.end
    }

    /// Number of calendar days per weekday (Monday first) inside the window.
    pub fn observed_days(&self) -> [u32; DAYS_PER_WEEK] {
        let mut out = [0u32; DAYS_PER_WEEK];
        for day in self.start.iter_days().take_while(|d| *d < self.end) {
            out[day.weekday().num_days_from_monday() as usize] += 1;
        }
        out
    }
}

/// Counters for events that were read but not binned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub binned: u64,
    pub outside_grid: u64,
    pub outside_window: u64,
    pub skipped_rows: u64,
}

/// Integer slot tallies; shards merge by addition.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeAccumulator {
    spec: GridSpec,
    window: ObservationWindow,
    tallies: Vec<u64>,
    stats: IngestStats,
}

impl CubeAccumulator {
    pub fn new(spec: GridSpec, window: ObservationWindow) -> Self {
        CubeAccumulator { spec, window, tallies: vec![0; spec.n_cells() * HOURS_PER_WEEK], stats: IngestStats::default() }
    }

    pub fn add(&mut self, event: &ActivityEvent) {
        if !self.window.contains(event.local_date()) {
            self.stats.outside_window += 1;
            return;
        }
        match self.spec.locate(event.x, event.y) {
            Some((r, c)) => {
                self.tallies[self.spec.index(r, c) * HOURS_PER_WEEK + event.slot()] += 1;
                self.stats.binned += 1;
            }
            None => self.stats.outside_grid += 1,
        }
    }

    pub fn merge(mut self, other: &CubeAccumulator) -> Result<Self> {
        if self.spec != other.spec || self.window != other.window {
            return Err(Error::Consistency("cannot merge accumulators over different grids or windows".into()));
        }
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            *a += b;
        }
        self.stats.binned += other.stats.binned;
        self.stats.outside_grid += other.stats.outside_grid;
        self.stats.outside_window += other.stats.outside_window;
        self.stats.skipped_rows += other.stats.skipped_rows;
        Ok(self)
    }

    pub fn finish(self) -> ActivityCube {
        let observed_days = self.window.observed_days();
        let averages = self
            .tallies
            .iter()
            .enumerate()
            .map(|(i, &t)| t as f64 / observed_days[(i % HOURS_PER_WEEK) / HOURS_PER_DAY] as f64)
            .collect();
        let total_events = self.tallies.chunks_exact(HOURS_PER_WEEK).map(|c| c.iter().sum()).collect();
        ActivityCube { spec: self.spec, window: self.window, observed_days, averages, total_events, stats: self.stats }
    }
}

/// Per-cell average events per hour-of-week slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCube {
    pub spec: GridSpec,
    pub window: ObservationWindow,
    pub observed_days: [u32; DAYS_PER_WEEK],
    /// `n_cells * 168` averages, cell-major.
    pub averages: Vec<f64>,
    pub total_events: Vec<u64>,
    pub stats: IngestStats,
}

impl ActivityCube {
    pub fn series(&self, cell: usize) -> &[f64] {
        &self.averages[cell * HOURS_PER_WEEK..(cell + 1) * HOURS_PER_WEEK]
    }

    pub fn series_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.averages[cell * HOURS_PER_WEEK..(cell + 1) * HOURS_PER_WEEK]
    }

    /// Builds a cube directly from averages, e.g. for tests and simulations.
    /// Totals are recovered as `round(average * observed_days)`.
    pub fn from_averages(spec: GridSpec, window: ObservationWindow, averages: Vec<f64>) -> Result<Self> {
        if averages.len() != spec.n_cells() * HOURS_PER_WEEK {
            return Err(Error::Consistency(format!(
                "expected {} averages, got {}",
                spec.n_cells() * HOURS_PER_WEEK,
                averages.len()
            )));
        }
        if averages.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Argument("averages must be finite and non-negative".into()));
        }
        let observed_days = window.observed_days();
        let total_events: Vec<u64> = averages
            .chunks_exact(HOURS_PER_WEEK)
            .map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(slot, a)| (a * observed_days[slot / HOURS_PER_DAY] as f64).round() as u64)
                    .sum()
            })
            .collect();
        let binned = total_events.iter().sum();
        Ok(ActivityCube {
            spec,
            window,
            observed_days,
            averages,
            total_events,
            stats: IngestStats { binned, ..Default::default() },
        })
    }

    /// Writes `row,col,day,hour,avg_count` for every cell with at least one event.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "col", "day", "hour", "avg_count"])?;
        for cell in 0..self.spec.n_cells() {
            if self.total_events[cell] == 0 {
                continue;
            }
            let (r, c) = self.spec.row_col(cell);
            for (slot, avg) in self.series(cell).iter().enumerate() {
                wtr.write_record([
                    r.to_string(),
                    c.to_string(),
                    (slot / HOURS_PER_DAY).to_string(),
                    (slot % HOURS_PER_DAY).to_string(),
                    avg.to_string(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<cube csv>", e))?;
        Ok(())
    }

    pub fn metadata(&self) -> CubeMetadata {
        CubeMetadata {
            grid: self.spec,
            window: self.window,
            observed_days: self.observed_days,
            stats: self.stats,
        }
    }

    pub fn read_csv<R: Read>(meta: &CubeMetadata, r: R) -> Result<Self> {
        if meta.observed_days != meta.window.observed_days() {
            return Err(Error::Consistency("cube metadata observed_days disagree with its window".into()));
        }
        let spec = meta.grid;
        let mut averages = vec![0.0; spec.n_cells() * HOURS_PER_WEEK];
        let mut rdr = csv::Reader::from_reader(r);
        check_header(rdr.headers()?, &["row", "col", "day", "hour", "avg_count"])?;
        for rec in rdr.records() {
            let rec = rec?;
            let row: usize = parse_field(&rec, 0)?;
            let col: usize = parse_field(&rec, 1)?;
            let day: usize = parse_field(&rec, 2)?;
            let hour: usize = parse_field(&rec, 3)?;
            let avg: f64 = parse_field(&rec, 4)?;
            if row >= spec.n_rows || col >= spec.n_cols || day >= DAYS_PER_WEEK || hour >= HOURS_PER_DAY {
                return Err(Error::Consistency(format!("cube entry ({row},{col},{day},{hour}) out of range")));
            }
            averages[spec.index(row, col) * HOURS_PER_WEEK + day * HOURS_PER_DAY + hour] = avg;
        }
        let mut cube = ActivityCube::from_averages(spec, meta.window, averages)?;
        cube.stats = meta.stats;
        Ok(cube)
    }
}

/// Sidecar metadata persisted next to the cube CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeMetadata {
    pub grid: GridSpec,
    pub window: ObservationWindow,
    pub observed_days: [u32; DAYS_PER_WEEK],
    pub stats: IngestStats,
}

/// Bins a stream of events. Out-of-grid and out-of-window events are counted in
/// [`ActivityCube::stats`]; the result does not depend on event order.
pub fn bin_events<I>(events: I, spec: &GridSpec, window: &ObservationWindow) -> Result<ActivityCube>
where
    I: IntoIterator<Item = ActivityEvent>,
{
    spec.validate()?;
    ObservationWindow::new(window.start, window.end)?;
    let mut acc = CubeAccumulator::new(*spec, *window);
    for e in events {
        acc.add(&e);
    }
    Ok(acc.finish())
}

/// Parses one `timestamp,x,y` record.
pub fn parse_event(timestamp: &str, x: &str, y: &str) -> Option<ActivityEvent> {
    let timestamp = DateTime::parse_from_rfc3339(timestamp.trim()).ok()?;
    let x: f64 = x.trim().parse().ok()?;
    let y: f64 = y.trim().parse().ok()?;
    (x.is_finite() && y.is_finite()).then_some(ActivityEvent { timestamp, x, y })
}

/// Wraps a reader, transparently decompressing gzip input.
pub fn maybe_gzip<R: Read + 'static>(r: R) -> Result<Box<dyn Read>> {
    let mut buf = BufReader::new(r);
    let magic = buf.fill_buf().map_err(|e| Error::io("<events>", e))?;
    if magic.len() >= 2 && magic[0] == 0x1f && magic[1] == 0x8b {
        Ok(Box::new(flate2::read::MultiGzDecoder::new(buf)))
    } else {
        Ok(Box::new(buf))
    }
}

/// Streams a `timestamp,x,y` CSV into a cube.
///
/// Records are parsed in parallel batches and binned into one accumulator, so
/// memory stays bounded by the batch size plus the cube. Unparseable rows are
/// skipped and counted; more than 1% skipped aborts with a parse error.
pub fn ingest_csv<R: Read>(r: R, spec: &GridSpec, window: &ObservationWindow) -> Result<ActivityCube> {
    spec.validate()?;
    ObservationWindow::new(window.start, window.end)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    check_header(rdr.headers()?, &["timestamp", "x", "y"])?;
    let mut acc = CubeAccumulator::new(*spec, *window);
    let mut batch: Vec<csv::StringRecord> = Vec::with_capacity(PARSE_BATCH);
    let mut total_rows = 0u64;
    let mut skipped = 0u64;
    let mut records = rdr.records();
    loop {
        batch.clear();
        for rec in records.by_ref().take(PARSE_BATCH) {
            match rec {
                Ok(r) => batch.push(r),
                Err(_) => {
                    total_rows += 1;
                    skipped += 1;
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        total_rows += batch.len() as u64;
        let parsed: Vec<Option<ActivityEvent>> = batch
            .par_iter()
            .map(|rec| match (rec.get(0), rec.get(1), rec.get(2)) {
                (Some(t), Some(x), Some(y)) => parse_event(t, x, y),
                _ => None,
            })
            .collect();
        for e in parsed {
            match e {
                Some(e) => acc.add(&e),
                None => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} unparseable event rows of {total_rows}");
    }
    if total_rows > 0 && skipped as f64 / total_rows as f64 > MAX_SKIP_FRACTION {
        return Err(Error::Parse(format!(
            "{skipped} of {total_rows} event rows unparseable (more than {:.0}%)",
            MAX_SKIP_FRACTION * 100.0
        )));
    }
    acc.stats.skipped_rows = skipped;
    let cube = acc.finish();
    if cube.stats.outside_grid + cube.stats.outside_window > 0 {
        log::info!(
            "{} events outside the grid, {} outside the window",
            cube.stats.outside_grid,
            cube.stats.outside_window
        );
    }
    Ok(cube)
}

pub fn write_events_csv<W: Write, I>(events: I, w: W) -> Result<()>
where
    I: IntoIterator,
    I::Item: Borrow<ActivityEvent>,
{
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["timestamp", "x", "y"])?;
    for e in events {
        let e = e.borrow();
        wtr.write_record([e.timestamp.to_rfc3339(), e.x.to_string(), e.y.to_string()])?;
    }
    wtr.flush().map_err(|err| Error::io("<events csv>", err))?;
    Ok(())
}

/// Flat indices of cells with at least `min_total_events` binned events, ascending.
pub fn apply_activity_threshold(cube: &ActivityCube, min_total_events: u64) -> Vec<usize> {
    cube.total_events
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= min_total_events)
        .map(|(i, _)| i)
        .collect()
}
