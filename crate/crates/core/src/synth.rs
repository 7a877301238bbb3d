//! Synthetic city: a patchy zoning layout plus a Poisson event stream with
//! per-class weekly signatures.

use std::collections::VecDeque;

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, TimeZone};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LandUseClass, ZoningGrid, DEFAULT_CELL_SIZE};
use crate::ingest::{ActivityEvent, ObservationWindow, HOURS_PER_DAY, HOURS_PER_WEEK};
use crate::rforest::derive_seed;
use crate::zoning::ZoningPolygon;

/// Cell counts of the reference city, Residential first.
pub const REFERENCE_COUNTS: [usize; 5] = [23322, 1854, 2236, 1941, 2045];

const EVENT_CHUNK: usize = 256;

const PATCH_JITTER: f64 = 3.0;

/// How per-slot event counts are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountModel {
    /// Poisson with mean `λ`; for `noise > 0` the rate is first drawn from a
    /// Gamma with mean `λ` and coefficient of variation `noise`.
    #[default]
    Poisson,
    /// No randomness in counts: the `n` occurrences of a slot together carry
    /// `round(n·λ)` events, spread by error diffusion. Requires `noise = 0`.
    Expected,
}

impl std::str::FromStr for CountModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(CountModel::Poisson),
            "expected" => Ok(CountModel::Expected),
            other => Err(Error::Config(format!("unknown count model {other:?} (expected poisson or expected)"))),
        }
    }
}

/// Generator parameters.
///
/// Intensities are events per hour at multiplier 1. The density multiplier is
/// `gradient` at the grid centre and falls linearly to 1 at the corners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cell_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Target share per class, Residential first.
    pub shares: [f64; 5],
    /// Expected size in cells of a contiguous minority-class patch; sizes are
    /// drawn uniformly from half to one and a half times this.
    pub patch_size: f64,
    /// 168 hourly intensities per class, Monday 00:00 first.
    pub profiles: Vec<Vec<f64>>,
    pub gradient: f64,
    /// Coefficient of variation of the per-slot rate.
    pub noise: f64,
    pub count_model: CountModel,
    pub start: NaiveDate,
    pub days: u32,
    pub utc_offset_hours: i32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let total: usize = REFERENCE_COUNTS.iter().sum();
        let shares = REFERENCE_COUNTS.map(|c| c as f64 / total as f64);
        SynthConfig {
            n_rows: 100,
            n_cols: 100,
            cell_size: DEFAULT_CELL_SIZE,
            origin_x: 0.0,
            origin_y: 0.0,
            shares,
            patch_size: 30.0,
            profiles: LandUseClass::ALL.iter().map(|&c| default_profile(c).to_vec()).collect(),
            gradient: 2.0,
            noise: 0.0,
            count_model: CountModel::Poisson,
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            days: 21,
            utc_offset_hours: 0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.origin_x, self.origin_y, self.cell_size, self.n_rows, self.n_cols)
    }

    pub fn window(&self) -> Result<ObservationWindow> {
        ObservationWindow::from_days(self.start, self.days)
    }

    pub fn offset(&self) -> Result<FixedOffset> {
        FixedOffset::east_opt(self.utc_offset_hours * 3600)
            .ok_or_else(|| Error::Config(format!("utc_offset_hours {} out of range", self.utc_offset_hours)))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        self.window()?;
        self.offset()?;
        if self.shares.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(format!("shares must be finite and non-negative: {:?}", self.shares)));
        }
        let sum: f64 = self.shares.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("shares sum to {sum}, not 1")));
        }
        if !(self.patch_size >= 1.0 && self.patch_size.is_finite()) {
            return Err(Error::Config(format!("patch_size must be at least 1, got {}", self.patch_size)));
        }
        if self.profiles.len() != 5 {
            return Err(Error::Config(format!("{} class profiles given, 5 required", self.profiles.len())));
        }
        for (class, p) in LandUseClass::ALL.iter().zip(&self.profiles) {
            if p.len() != HOURS_PER_WEEK {
                return Err(Error::Config(format!("{} profile has {} hours, 168 required", class.name(), p.len())));
            }
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("{} profile has a negative or non-finite intensity", class.name())));
            }
        }
        if !(self.gradient.is_finite() && self.gradient > 0.0) {
            return Err(Error::Config(format!("gradient must be positive, got {}", self.gradient)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.count_model == CountModel::Expected && self.noise != 0.0 {
            return Err(Error::Config("count_model = expected requires noise = 0".into()));
        }
        Ok(())
    }

    /// Per-class cell counts: largest-remainder rounding of `shares * n_cells`.
    pub fn target_counts(&self) -> Result<[usize; 5]> {
        self.validate()?;
        let n = self.n_rows * self.n_cols;
        let present = self.shares.iter().filter(|&&s| s > 0.0).count();
        if present > n {
            return Err(Error::Config(format!("{present} classes cannot fit in {n} cells")));
        }
        let exact: Vec<f64> = self.shares.iter().map(|s| s * n as f64).collect();
        let mut counts: [usize; 5] = std::array::from_fn(|k| exact[k].floor() as usize);
        let mut order: Vec<usize> = (0..5).filter(|&k| self.shares[k] > 0.0).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut assigned: usize = counts.iter().sum();
        for &k in order.iter().cycle() {
            if assigned >= n {
                break;
            }
            counts[k] += 1;
            assigned += 1;
        }
        // Every class with a positive share gets at least one cell.
        for k in 0..5 {
            if self.shares[k] > 0.0 && counts[k] == 0 {
                let donor = (0..5).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("five classes");
                counts[donor] -= 1;
                counts[k] += 1;
            }
        }
        Ok(counts)
    }

    /// Density multiplier of a cell.
    pub fn density(&self, row: usize, col: usize) -> f64 {
        let cy = (self.n_rows as f64 - 1.0) / 2.0;
        let cx = (self.n_cols as f64 - 1.0) / 2.0;
        let dmax = (cx * cx + cy * cy).sqrt();
        if dmax == 0.0 {
            return self.gradient;
        }
        let (dy, dx) = (row as f64 - cy, col as f64 - cx);
        let r = (dx * dx + dy * dy).sqrt() / dmax;
        self.gradient + (1.0 - self.gradient) * r
    }

    pub fn profile(&self, class: LandUseClass) -> &[f64] {
        &self.profiles[class.ordinal()]
    }
}

const fn in_range(h: usize, lo: usize, hi: usize) -> bool {
    h >= lo && h < hi
}

/// Shared circadian shape: quiet before dawn, busy through the day.
const CIRCADIAN: [f64; 24] = [
    0.35, 0.25, 0.2, 0.2, 0.2, 0.3, 0.5, 0.8, 1.0, 1.1, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.15, 1.1, 1.0, 0.9,
    0.7, 0.5,
];

/// Built-in weekly intensity profile of a class.
pub fn default_profile(class: LandUseClass) -> [f64; HOURS_PER_WEEK] {
    let mut out = [0.0; HOURS_PER_WEEK];
    for (slot, v) in out.iter_mut().enumerate() {
        let day = slot / HOURS_PER_DAY;
        let h = slot % HOURS_PER_DAY;
        let weekend = day >= 5;
        let evening = in_range(h, 19, 24) || h < 6;
        let midday = in_range(h, 10, 16);
        let base = CIRCADIAN[h];
        *v = match class {
            LandUseClass::Residential => {
                let m = if weekend {
                    1.1
                } else if evening {
                    1.7
                } else if midday {
                    0.55
                } else {
                    1.0
                };
                base * m
            }
            LandUseClass::Commercial => {
                let m = if weekend {
                    0.8
                } else if evening {
                    0.55
                } else if midday {
                    1.8
                } else {
                    1.0
                };
                1.3 * base * m
            }
            LandUseClass::Industrial => {
                if !weekend && in_range(h, 7, 18) {
                    1.2
                } else {
                    0.9 * 0.45 * base
                }
            }
            LandUseClass::Parks => {
                let m = if weekend && in_range(h, 12, 19) { 2.6 } else { 0.8 };
                0.7 * base * m
            }
            LandUseClass::Other => {
                let m = if weekend && h < 3 { 6.0 } else { 1.0 };
                0.8 * base * m
            }
        };
    }
    out
}

/// Patch-grown zoning layout with exactly [`SynthConfig::target_counts`] cells per class.
///
/// Minority classes are placed first as compact blobs grown from random seeds
/// on the 4-neighbourhood; the most common class fills whatever is left.
pub fn generate_layout(cfg: &SynthConfig) -> Result<ZoningGrid> {
    let counts = cfg.target_counts()?;
    let spec = cfg.grid_spec()?;
    let n = spec.n_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let background = (0..5).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).expect("five classes");
    let mut labels: Vec<Option<LandUseClass>> = vec![None; n];
    let mut free: Vec<usize> = (0..n).collect();
    free.shuffle(&mut rng);
    let mut free_pos = 0usize;

    for k in (0..5).filter(|&k| k != background) {
        let class = LandUseClass::ALL[k];
        let mut remaining = counts[k];
        while remaining > 0 {
            while labels[free[free_pos]].is_some() {
                free_pos += 1;
            }
            let seed_cell = free[free_pos];
            let lo = (cfg.patch_size / 2.0).round().max(1.0) as usize;
            let hi = (1.5 * cfg.patch_size).round().max(lo as f64) as usize;
            let size = rng.random_range(lo..=hi).min(remaining);
            remaining -= grow_patch(&spec, &mut labels, seed_cell, class, size, &mut rng);
        }
    }
    let bg = LandUseClass::ALL[background];
    for l in labels.iter_mut().filter(|l| l.is_none()) {
        *l = Some(bg);
    }
    ZoningGrid::from_labels(spec, labels)
}

/// Grows a roughly round blob: the free frontier cell nearest the seed (with a
/// little jitter) is taken next.
fn grow_patch(
    spec: &GridSpec,
    labels: &mut [Option<LandUseClass>],
    seed: usize,
    class: LandUseClass,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let (r0, c0) = spec.row_col(seed);
    let mut frontier: Vec<(f64, usize)> = vec![(0.0, seed)];
    let mut queued = std::collections::HashSet::from([seed]);
    let mut placed = 0;
    while placed < size && !frontier.is_empty() {
        let next = (0..frontier.len())
            .min_by(|&a, &b| frontier[a].0.total_cmp(&frontier[b].0))
            .expect("non-empty frontier");
        let (_, cell) = frontier.swap_remove(next);
        labels[cell] = Some(class);
        placed += 1;
        let (r, c) = spec.row_col(cell);
        let neighbours = [
            (r > 0).then(|| (r - 1, c)),
            (r + 1 < spec.n_rows).then(|| (r + 1, c)),
            (c > 0).then(|| (r, c - 1)),
            (c + 1 < spec.n_cols).then(|| (r, c + 1)),
        ];
        for (rr, cc) in neighbours.into_iter().flatten() {
            let j = spec.index(rr, cc);
            if labels[j].is_none() && queued.insert(j) {
                let (dr, dc) = (rr as f64 - r0 as f64, cc as f64 - c0 as f64);
                frontier.push((dr * dr + dc * dc + PATCH_JITTER * rng.random::<f64>(), j));
            }
        }
    }
    placed
}

/// Expected events per hour of every slot of a cell.
pub fn cell_intensity(cfg: &SynthConfig, zg: &ZoningGrid, cell: usize) -> Option<Vec<f64>> {
    let class = zg.labels[cell]?;
    let (r, c) = zg.spec.row_col(cell);
    let d = cfg.density(r, c);
    Some(cfg.profile(class).iter().map(|v| v * d).collect())
}

/// Lazily generated event stream in canonical order: cells ascending, then time.
///
/// Each cell draws from its own seeded generator, so chunks are produced in
/// parallel without affecting the output.
pub struct EventStream<'a> {
    cfg: &'a SynthConfig,
    zg: &'a ZoningGrid,
    offset: FixedOffset,
    dates: Vec<NaiveDate>,
    next_cell: usize,
    buf: std::vec::IntoIter<ActivityEvent>,
}

impl Iterator for EventStream<'_> {
    type Item = ActivityEvent;

    fn next(&mut self) -> Option<ActivityEvent> {
        loop {
            if let Some(e) = self.buf.next() {
                return Some(e);
            }
            let n = self.zg.spec.n_cells();
            if self.next_cell >= n {
                return None;
            }
            let end = (self.next_cell + EVENT_CHUNK).min(n);
            let chunk: Vec<Vec<ActivityEvent>> =
                (self.next_cell..end).into_par_iter().map(|cell| self.cell_events(cell)).collect();
            self.next_cell = end;
            self.buf = chunk.concat().into_iter();
        }
    }
}

impl EventStream<'_> {
    fn cell_events(&self, cell: usize) -> Vec<ActivityEvent> {
        let Some(lambda) = cell_intensity(self.cfg, self.zg, cell) else {
            return Vec::new();
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, 1 + cell as u64));
        let (r, c) = self.zg.spec.row_col(cell);
        let rect = self.zg.spec.cell_rect(r, c);
        let mut seen = [0u64; HOURS_PER_WEEK];
        let mut out = Vec::new();
        let mut seconds = Vec::new();
        for date in &self.dates {
            let day = date.weekday().num_days_from_monday() as usize;
            let midnight = self
                .offset
                .from_local_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
                .single()
                .expect("fixed offsets are unambiguous");
            for h in 0..HOURS_PER_DAY {
                let slot = day * HOURS_PER_DAY + h;
                let l = lambda[slot];
                let k = match self.cfg.count_model {
                    CountModel::Expected => {
                        let i = seen[slot] as f64;
                        ((i + 1.0) * l + 0.5).floor() as u64 - (i * l + 0.5).floor() as u64
                    }
                    CountModel::Poisson => draw_count(l, self.cfg.noise, &mut rng),
                };
                seen[slot] += 1;
                seconds.clear();
                seconds.extend((0..k).map(|_| rng.random_range(0..3600i64)));
                seconds.sort_unstable();
                for &s in &seconds {
                    let x = inside(rect.min_x, rect.max_x, rng.random::<f64>());
                    let y = inside(rect.min_y, rect.max_y, rng.random::<f64>());
                    let timestamp = midnight + Duration::seconds(h as i64 * 3600 + s);
                    out.push(ActivityEvent { timestamp, x, y });
                }
            }
        }
        out
    }
}

/// `lo + u·(hi-lo)` kept strictly below `hi` despite rounding.
fn inside(lo: f64, hi: f64, u: f64) -> f64 {
    let v = lo + u * (hi - lo);
    if v < hi {
        v
    } else {
        f64::from_bits(hi.to_bits() - 1).max(lo)
    }
}

fn draw_count(lambda: f64, noise: f64, rng: &mut ChaCha8Rng) -> u64 {
    let rate = if noise > 0.0 && lambda > 0.0 {
        let shape = 1.0 / (noise * noise);
        Gamma::new(shape, lambda / shape).expect("positive parameters").sample(rng)
    } else {
        lambda
    };
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}

/// Event stream for a layout over the configured window.
pub fn generate_events<'a>(zg: &'a ZoningGrid, cfg: &'a SynthConfig) -> Result<EventStream<'a>> {
    cfg.validate()?;
    if zg.spec != cfg.grid_spec()? {
        return Err(Error::Consistency("zoning grid does not match the generator grid".into()));
    }
    let window = cfg.window()?;
    let dates = window.start.iter_days().take_while(|d| *d < window.end).collect();
    Ok(EventStream { cfg, zg, offset: cfg.offset()?, dates, next_cell: 0, buf: Vec::new().into_iter() })
}

/// One square polygon per labeled cell, so rasterizing them reproduces the layout.
pub fn layout_polygons(zg: &ZoningGrid) -> Vec<ZoningPolygon> {
    (0..zg.spec.n_cells())
        .filter_map(|i| {
            let class = zg.labels[i]?;
            let (r, c) = zg.spec.row_col(i);
            let rect = zg.spec.cell_rect(r, c);
            Some(ZoningPolygon::rectangle(rect.min_x, rect.min_y, rect.max_x, rect.max_y, class))
        })
        .collect()
}

/// Replaces `fraction` of the labeled cells, chosen uniformly, with a different uniformly chosen class.
pub fn corrupt_labels(zg: &ZoningGrid, fraction: f64, seed: u64) -> ZoningGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<usize> = (0..zg.labels.len()).filter(|&i| zg.labels[i].is_some()).collect();
    let k = (fraction * cells.len() as f64).round() as usize;
    let (chosen, _) = cells.partial_shuffle(&mut rng, k);
    let mut out = zg.clone();
    for &i in chosen.iter() {
        let own = out.labels[i].expect("labeled");
        let others: Vec<LandUseClass> = LandUseClass::ALL.into_iter().filter(|&c| c != own).collect();
        out.labels[i] = Some(others[rng.random_range(0..others.len())]);
    }
    out
}

/// Breadth-first connected components of equal labels on the 4-neighbourhood; returns component sizes.
pub fn patch_sizes(zg: &ZoningGrid) -> Vec<(LandUseClass, usize)> {
    let spec = zg.spec;
    let mut seen = vec![false; spec.n_cells()];
    let mut out = Vec::new();
    for start in 0..spec.n_cells() {
        let Some(class) = zg.labels[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        let mut size = 0;
        while let Some(cell) = q.pop_front() {
            size += 1;
            let (r, c) = spec.row_col(cell);
            let candidates = [
                (r > 0).then(|| (r - 1, c)),
                (r + 1 < spec.n_rows).then(|| (r + 1, c)),
                (c > 0).then(|| (r, c - 1)),
                (c + 1 < spec.n_cols).then(|| (r, c + 1)),
            ];
            for (rr, cc) in candidates.into_iter().flatten() {
                let j = spec.index(rr, cc);
                if !seen[j] && zg.labels[j] == Some(class) {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
        out.push((class, size));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::bin_events;

    fn small(rows: usize, cols: usize) -> SynthConfig {
        SynthConfig { n_rows: rows, n_cols: cols, days: 7, ..SynthConfig::default() }
    }

    #[test]
    fn default_shares_are_reference_shares() {
        let cfg = SynthConfig::default();
        cfg.validate().unwrap();
        let pct: Vec<f64> = cfg.shares.iter().map(|s| (s * 10000.0).round() / 100.0).collect();
        assert_eq!(pct, vec![74.28, 5.90, 7.12, 6.18, 6.51]);
        assert_eq!(cfg.start.weekday(), chrono::Weekday::Mon);
    }

    #[test]
    fn target_counts_within_one_cell() {
        let cfg = SynthConfig { n_rows: 177, n_cols: 177, ..SynthConfig::default() };
        let counts = cfg.target_counts().unwrap();
        let n = (177 * 177) as f64;
        assert_eq!(counts.iter().sum::<usize>(), 177 * 177);
        for k in 0..5 {
            assert!((counts[k] as f64 - cfg.shares[k] * n).abs() <= 1.0);
        }
    }

    #[test]
    fn layout_hits_targets_exactly() {
        let cfg = SynthConfig { n_rows: 40, n_cols: 50, seed: 9, ..SynthConfig::default() };
        let zg = generate_layout(&cfg).unwrap();
        let shares = zg.class_shares();
        assert_eq!(shares.counts, cfg.target_counts().unwrap());
        assert_eq!(generate_layout(&cfg).unwrap(), zg);
        let other = generate_layout(&SynthConfig { seed: 10, ..cfg.clone() }).unwrap();
        assert_ne!(other, zg);
    }

    #[test]
    fn single_class_is_uniform() {
        let cfg = SynthConfig { n_rows: 5, n_cols: 6, shares: [0.0, 0.0, 1.0, 0.0, 0.0], ..SynthConfig::default() };
        let zg = generate_layout(&cfg).unwrap();
        assert!(zg.labels.iter().all(|&l| l == Some(LandUseClass::Industrial)));
    }

    #[test]
    fn infeasible_shares_rejected() {
        let cfg = SynthConfig { n_rows: 1, n_cols: 3, shares: [0.2; 5], ..SynthConfig::default() };
        assert!(matches!(cfg.target_counts(), Err(Error::Config(_))));
        let bad = SynthConfig { shares: [0.5, 0.5, 0.5, 0.0, 0.0], ..SynthConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { patch_size: 0.5, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn minority_patches_are_contiguous() {
        let cfg = SynthConfig { n_rows: 60, n_cols: 60, seed: 3, ..SynthConfig::default() };
        let zg = generate_layout(&cfg).unwrap();
        let sizes: Vec<usize> = patch_sizes(&zg)
            .into_iter()
            .filter(|(c, _)| *c != LandUseClass::Residential)
            .map(|(_, s)| s)
            .collect();
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
        assert!(mean >= 4.0, "mean minority patch size {mean}");
    }

    #[test]
    fn expected_counts_round_trip() {
        let mut cfg = small(3, 4);
        cfg.count_model = CountModel::Expected;
        cfg.gradient = 1.0;
        cfg.days = 21;
        // Intensities on a grid of thirds are reproduced exactly by three weeks.
        for p in cfg.profiles.iter_mut() {
            for v in p.iter_mut() {
                *v = (*v * 3.0).round() / 3.0;
            }
        }
        let zg = generate_layout(&cfg).unwrap();
        let events: Vec<ActivityEvent> = generate_events(&zg, &cfg).unwrap().collect();
        let cube = bin_events(events, &zg.spec, &cfg.window().unwrap()).unwrap();
        for cell in 0..zg.spec.n_cells() {
            let want = cell_intensity(&cfg, &zg, cell).unwrap();
            for (a, b) in cube.series(cell).iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
        assert_eq!(cube.stats.outside_grid + cube.stats.outside_window, 0);
    }

    #[test]
    fn events_inside_cell_and_window_and_ordered() {
        let cfg = SynthConfig { utc_offset_hours: -5, ..small(4, 4) };
        let zg = generate_layout(&cfg).unwrap();
        let window = cfg.window().unwrap();
        let events: Vec<ActivityEvent> = generate_events(&zg, &cfg).unwrap().collect();
        assert!(!events.is_empty());
        let mut last = (0usize, events[0].timestamp);
        for e in &events {
            assert!(window.contains(e.local_date()));
            let (r, c) = zg.spec.locate(e.x, e.y).unwrap();
            let cell = zg.spec.index(r, c);
            assert!(cell > last.0 || (cell == last.0 && e.timestamp >= last.1));
            last = (cell, e.timestamp);
        }
        let again: Vec<ActivityEvent> = generate_events(&zg, &cfg).unwrap().collect();
        assert_eq!(events, again);
    }

    #[test]
    fn density_peaks_at_centre() {
        let cfg = SynthConfig { n_rows: 11, n_cols: 11, gradient: 3.0, ..SynthConfig::default() };
        assert_eq!(cfg.density(5, 5), 3.0);
        assert!((cfg.density(0, 0) - 1.0).abs() < 1e-12);
        assert!(cfg.density(0, 5) > 1.0 && cfg.density(0, 5) < 3.0);
    }

    #[test]
    fn corruption_changes_exact_fraction() {
        let cfg = SynthConfig { n_rows: 20, n_cols: 20, ..SynthConfig::default() };
        let zg = generate_layout(&cfg).unwrap();
        let bad = corrupt_labels(&zg, 0.1, 4);
        let changed = zg.labels.iter().zip(&bad.labels).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 40);
    }

    #[test]
    fn profiles_carry_their_signatures() {
        let res = default_profile(LandUseClass::Residential);
        let com = default_profile(LandUseClass::Commercial);
        let oth = default_profile(LandUseClass::Other);
        // Monday 21:00 and Monday 13:00.
        assert!(res[21] / res[13] > com[21] / com[13]);
        // Saturday 01:00 against Wednesday 01:00.
        assert!(oth[5 * 24 + 1] > 3.0 * oth[2 * 24 + 1]);
    }
}
