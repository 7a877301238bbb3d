//! Independent oracles and scene generators shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use landuse_core::geometry::Point;
use landuse_core::grid::{GridSpec, LandUseClass};
use landuse_core::ingest::{ActivityCube, ObservationWindow, HOURS_PER_WEEK};
use landuse_core::zoning::ZoningPolygon;
use rand::Rng;

pub fn window(days: u32) -> ObservationWindow {
    ObservationWindow::from_days(chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), days).unwrap()
}

/// Random cube with strictly varying series in every cell.
pub fn random_cube<R: Rng>(rng: &mut R, n_rows: usize, n_cols: usize) -> ActivityCube {
    let spec = GridSpec::new(0.0, 0.0, 200.0, n_rows, n_cols).unwrap();
    let scale: Vec<f64> = (0..spec.n_cells()).map(|_| 10f64.powf(rng.random_range(-2.0..3.0))).collect();
    let averages = (0..spec.n_cells() * HOURS_PER_WEEK)
        .map(|i| scale[i / HOURS_PER_WEEK] * rng.random_range(0.0..1.0))
        .collect();
    ActivityCube::from_averages(spec, window(21), averages).unwrap()
}

/// Even-odd point-in-ring test.
pub fn in_ring(ring: &[Point], [x, y]: Point) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = ring[i];
        let [xj, yj] = ring[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn in_polygon(p: &ZoningPolygon, pt: Point) -> bool {
    in_ring(&p.exterior, pt) && !p.holes.iter().any(|h| in_ring(h, pt))
}

/// Monte-Carlo estimate of each class's covered fraction of every cell, from a
/// jittered `per_axis × per_axis` sample.
pub fn monte_carlo_fractions<R: Rng>(
    polygons: &[ZoningPolygon],
    spec: &GridSpec,
    per_axis: usize,
    rng: &mut R,
) -> Vec<[f64; 5]> {
    let n = (per_axis * per_axis) as f64;
    (0..spec.n_cells())
        .map(|cell| {
            let (r, c) = spec.row_col(cell);
            let rect = spec.cell_rect(r, c);
            let step = spec.cell_size / per_axis as f64;
            let mut hits = [0usize; 5];
            for i in 0..per_axis {
                for j in 0..per_axis {
                    let pt = [
                        rect.min_x + (j as f64 + rng.random::<f64>()) * step,
                        rect.min_y + (i as f64 + rng.random::<f64>()) * step,
                    ];
                    for p in polygons {
                        if in_polygon(p, pt) {
                            hits[p.land_use.ordinal()] += 1;
                        }
                    }
                }
            }
            hits.map(|h| h as f64 / n)
        })
        .collect()
}

/// Star-shaped polygon around `centre`; vertex angles are jittered around an
/// even spread so consecutive gaps stay below 130 degrees. Half of them get a
/// small square hole around the centre.
pub fn random_star<R: Rng>(rng: &mut R, centre: Point, r_min: f64, r_max: f64, class: LandUseClass) -> ZoningPolygon {
    let n = rng.random_range(5..10);
    let mut ring: Vec<Point> = (0..n)
        .map(|i| {
            let a = 2.0 * PI * (i as f64 + rng.random_range(-0.4..0.4)) / n as f64;
            let r = rng.random_range(r_min..r_max);
            [centre[0] + r * a.cos(), centre[1] + r * a.sin()]
        })
        .collect();
    ring.push(ring[0]);
    let mut p = ZoningPolygon::new(ring, class);
    if rng.random_bool(0.5) {
        let h = 0.25 * r_min;
        let [cx, cy] = centre;
        p.holes.push(vec![[cx - h, cy - h], [cx - h, cy + h], [cx + h, cy + h], [cx + h, cy - h], [cx - h, cy - h]]);
    }
    p
}

/// A few random stars and axis-aligned rectangles over a small grid.
pub fn random_scene<R: Rng>(rng: &mut R, spec: &GridSpec) -> Vec<ZoningPolygon> {
    let ext = spec.extent();
    let (w, h) = (ext.max_x - ext.min_x, ext.max_y - ext.min_y);
    let n = rng.random_range(2..7);
    (0..n)
        .map(|_| {
            let class = LandUseClass::ALL[rng.random_range(0..5)];
            let cx = ext.min_x + rng.random_range(-0.1..1.1) * w;
            let cy = ext.min_y + rng.random_range(-0.1..1.1) * h;
            if rng.random_bool(0.3) {
                let hw = rng.random_range(0.2..1.5) * spec.cell_size;
                let hh = rng.random_range(0.2..1.5) * spec.cell_size;
                ZoningPolygon::rectangle(cx - hw, cy - hh, cx + hw, cy + hh, class)
            } else {
                let r_max = rng.random_range(0.5..2.5) * spec.cell_size;
                random_star(rng, [cx, cy], 0.3 * r_max, r_max, class)
            }
        })
        .collect()
}

/// Best root split found by trying every feature and every gap between
/// distinct values, scoring weighted Gini impurity in floating point.
///
/// Returns `None` when the node is pure or no split lowers the impurity.
/// Ties (within 1e-12) keep the lower feature, then the lower threshold.
pub fn exhaustive_root_split(x: &[Vec<f64>], y: &[usize], rows: &[usize], n_classes: usize) -> Option<(usize, f64)> {
    fn gini(counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return 0.0;
        }
        1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
    }
    let mut all = vec![0usize; n_classes];
    for &r in rows {
        all[y[r]] += 1;
    }
    let parent = gini(&all);
    if parent == 0.0 {
        return None;
    }
    let n = rows.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let mut left = vec![0usize; n_classes];
            let mut right = vec![0usize; n_classes];
            for &r in rows {
                if x[r][f] <= t {
                    left[y[r]] += 1;
                } else {
                    right[y[r]] += 1;
                }
            }
            let nl: usize = left.iter().sum();
            let nr: usize = right.iter().sum();
            let imp = (nl as f64 * gini(&left) + nr as f64 * gini(&right)) / n;
            if best.is_none_or(|(b, _, _)| imp < b - 1e-12) {
                best = Some((imp, f, t));
            }
        }
    }
    best.filter(|(imp, _, _)| *imp < parent - 1e-12).map(|(_, f, t)| (f, t))
}

/// Mean and population standard deviation.
pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
