//! Planar ring utilities: shoelace area, rectangle clipping and validity checks.

use crate::grid::Rect;

pub type Point = [f64; 2];

/// Signed shoelace area; positive for counter-clockwise rings.
/// Accepts rings with or without the repeated closing vertex.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = ring[i];
        let [x1, y1] = ring[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// Area of the part of `ring` lying inside `rect`.
///
/// Uses Sutherland-Hodgman against the four half-planes of the rectangle.
/// The clip window is convex, so the result's area is exact even for concave
/// input rings (any degenerate connecting edges contribute zero area).
/// Coordinates are shifted to the rectangle's corner first so the result
/// does not depend on where the scene sits in the plane.
pub fn clipped_area(ring: &[Point], rect: &Rect) -> f64 {
    let ox = rect.min_x;
    let oy = rect.min_y;
    let w = rect.max_x - rect.min_x;
    let h = rect.max_y - rect.min_y;
    let mut poly: Vec<Point> = open_ring(ring).iter().map(|&[x, y]| [x - ox, y - oy]).collect();
    let mut scratch = Vec::with_capacity(poly.len() + 4);
    for edge in [Edge::Left(0.0), Edge::Right(w), Edge::Bottom(0.0), Edge::Top(h)] {
        clip_half_plane(&poly, edge, &mut scratch);
        std::mem::swap(&mut poly, &mut scratch);
        if poly.is_empty() {
            return 0.0;
        }
    }
    signed_area(&poly).abs()
}

fn open_ring(ring: &[Point]) -> &[Point] {
    if ring.len() > 1 && ring.first() == ring.last() {
        &ring[..ring.len() - 1]
    } else {
        ring
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Left(f64),
    Right(f64),
    Bottom(f64),
    Top(f64),
}

impl Edge {
    fn inside(self, [x, y]: Point) -> bool {
        match self {
            Edge::Left(v) => x >= v,
            Edge::Right(v) => x <= v,
            Edge::Bottom(v) => y >= v,
            Edge::Top(v) => y <= v,
        }
    }

    fn intersect(self, [x0, y0]: Point, [x1, y1]: Point) -> Point {
        match self {
            Edge::Left(v) | Edge::Right(v) => {
                let t = (v - x0) / (x1 - x0);
                [v, y0 + t * (y1 - y0)]
            }
            Edge::Bottom(v) | Edge::Top(v) => {
                let t = (v - y0) / (y1 - y0);
                [x0 + t * (x1 - x0), v]
            }
        }
    }
}

fn clip_half_plane(input: &[Point], edge: Edge, out: &mut Vec<Point>) {
    out.clear();
    let n = input.len();
    for i in 0..n {
        let cur = input[i];
        let prev = input[(i + n - 1) % n];
        let cur_in = edge.inside(cur);
        let prev_in = edge.inside(prev);
        if cur_in {
            if !prev_in {
                out.push(edge.intersect(prev, cur));
            }
            out.push(cur);
        } else if prev_in {
            out.push(edge.intersect(prev, cur));
        }
    }
}

pub fn bounding_rect(ring: &[Point]) -> Rect {
    let mut r = Rect { min_x: f64::INFINITY, min_y: f64::INFINITY, max_x: f64::NEG_INFINITY, max_y: f64::NEG_INFINITY };
    for &[x, y] in ring {
        r.min_x = r.min_x.min(x);
        r.min_y = r.min_y.min(y);
        r.max_x = r.max_x.max(x);
        r.max_y = r.max_y.max(y);
    }
    r
}

/// Checks a closed ring: finite coordinates, first == last, at least four
/// vertices, non-zero area and no self-intersections.
pub fn validate_ring(ring: &[Point]) -> Result<(), String> {
    if ring.len() < 4 {
        return Err(format!("ring has {} vertices, need at least 4", ring.len()));
    }
    if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err("ring has non-finite coordinates".into());
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    if signed_area(ring) == 0.0 {
        return Err("ring has zero area".into());
    }
    if let Some((a, b)) = find_self_intersection(ring) {
        return Err(format!("ring self-intersects between edges {a} and {b}"));
    }
    Ok(())
}

/// Returns the first pair of non-adjacent edges that touch or cross.
/// Quadratic in the vertex count, which is fine for parcel-scale polygons.
fn find_self_intersection(ring: &[Point]) -> Option<(usize, usize)> {
    let pts = open_ring(ring);
    let n = pts.len();
    for i in 0..n {
        let a0 = pts[i];
        let a1 = pts[(i + 1) % n];
        if a0 == a1 {
            continue;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let b0 = pts[j];
            let b1 = pts[(j + 1) % n];
            if b0 == b1 {
                continue;
            }
            if adjacent {
                // Adjacent edges share one vertex; they only conflict if they fold back onto each other.
                if collinear_overlap(a0, a1, b0, b1) {
                    return Some((i, j));
                }
                continue;
            }
            if segments_intersect(a0, a1, b0, b1) {
                return Some((i, j));
            }
        }
    }
    None
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(b0, b1, a0))
        || (d2 == 0.0 && on_segment(b0, b1, a1))
        || (d3 == 0.0 && on_segment(a0, a1, b0))
        || (d4 == 0.0 && on_segment(a0, a1, b1))
}

fn collinear_overlap(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    if orient(a0, a1, b0) != 0.0 || orient(a0, a1, b1) != 0.0 {
        return false;
    }
    // Shared vertex is a1 == b0 for consecutive edges; overlap means the far
    // ends point the same way from it.
    let (shared, p, q) = if a1 == b0 {
        (a1, a0, b1)
    } else if a0 == b1 {
        (a0, a1, b0)
    } else {
        return segments_intersect(a0, a1, b0, b1);
    };
    let dot = (p[0] - shared[0]) * (q[0] - shared[0]) + (p[1] - shared[1]) * (q[1] - shared[1]);
    dot > 0.0
}
