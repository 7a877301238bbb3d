//! Zoning polygons and their majority-area rasterization onto the lattice.

use std::io::{Read, Write};

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, Value};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bounding_rect, clipped_area, validate_ring, Point};
use crate::grid::{GridSpec, LandUseClass, Rect, ZoningGrid};

/// Area ties closer than this fraction of a cell go to the lower category code.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ZoningPolygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
    pub land_use: LandUseClass,
}

impl ZoningPolygon {
    pub fn new(exterior: Vec<Point>, land_use: LandUseClass) -> Self {
        ZoningPolygon { exterior, holes: Vec::new(), land_use }
    }

    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64, land_use: LandUseClass) -> Self {
        let ring = vec![[min_x, min_y], [max_x, min_y], [max_x, max_y], [min_x, max_y], [min_x, min_y]];
        ZoningPolygon::new(ring, land_use)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        validate_ring(&self.exterior).map_err(|e| format!("exterior: {e}"))?;
        for (k, hole) in self.holes.iter().enumerate() {
            validate_ring(hole).map_err(|e| format!("hole {k}: {e}"))?;
        }
        Ok(())
    }

    /// Area of this polygon (holes removed) inside `rect`.
    pub fn area_in(&self, rect: &Rect) -> f64 {
        let outer = clipped_area(&self.exterior, rect);
        if outer == 0.0 {
            return 0.0;
        }
        let holes: f64 = self.holes.iter().map(|h| clipped_area(h, rect)).sum();
        (outer - holes).max(0.0)
    }
}

/// Per-cell covered fraction for each class, indexed by [`LandUseClass::ordinal`].
pub fn coverage_fractions(polygons: &[ZoningPolygon], spec: &GridSpec) -> Result<Vec<[f64; 5]>> {
    for (index, p) in polygons.iter().enumerate() {
        p.validate().map_err(|reason| Error::InvalidPolygon { index, reason })?;
    }
    let boxes: Vec<Rect> = polygons.iter().map(|p| bounding_rect(&p.exterior)).collect();
    let cell_area = spec.cell_size * spec.cell_size;

    let rows: Vec<Vec<[f64; 5]>> = (0..spec.n_rows)
        .into_par_iter()
        .map(|row| {
            let mut acc = vec![[0.0f64; 5]; spec.n_cols];
            let row_rect = spec.cell_rect(row, 0);
            for (p, bb) in polygons.iter().zip(&boxes) {
                if bb.max_y <= row_rect.min_y || bb.min_y >= row_rect.max_y {
                    continue;
                }
                let Some((c0, c1)) = col_span(spec, bb) else { continue };
                for (col, slot) in acc.iter_mut().enumerate().take(c1 + 1).skip(c0) {
                    let a = p.area_in(&spec.cell_rect(row, col));
                    if a > 0.0 {
                        slot[p.land_use.ordinal()] += a / cell_area;
                    }
                }
            }
            acc
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn col_span(spec: &GridSpec, bb: &Rect) -> Option<(usize, usize)> {
    let lo = ((bb.min_x - spec.origin_x) / spec.cell_size).floor();
    let hi = ((bb.max_x - spec.origin_x) / spec.cell_size).floor();
    if hi < 0.0 || lo >= spec.n_cols as f64 {
        return None;
    }
    let c0 = lo.max(0.0) as usize;
    let c1 = (hi as usize).min(spec.n_cols - 1);
    Some((c0, c1))
}

/// Labels each cell with the class covering the largest share of its area.
///
/// Cells whose total covered fraction is zero or below `min_coverage` stay unlabeled.
pub fn rasterize_zoning(polygons: &[ZoningPolygon], spec: &GridSpec, min_coverage: f64) -> Result<ZoningGrid> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::Config(format!("min_coverage must lie in [0, 1], got {min_coverage}")));
    }
    let fractions = coverage_fractions(polygons, spec)?;
    let labels = fractions.iter().map(|f| majority_class(f, min_coverage)).collect();
    ZoningGrid::from_labels(*spec, labels)
}

fn majority_class(fractions: &[f64; 5], min_coverage: f64) -> Option<LandUseClass> {
    let total: f64 = fractions.iter().sum();
    if total <= 0.0 || total < min_coverage {
        return None;
    }
    let mut best = 0;
    for k in 1..5 {
        if fractions[k] > fractions[best] + TIE_EPS {
            best = k;
        }
    }
    Some(LandUseClass::ALL[best])
}

fn ring_from_json(ring: &[Vec<f64>]) -> Vec<Point> {
    ring.iter().map(|p| [p.first().copied().unwrap_or(f64::NAN), p.get(1).copied().unwrap_or(f64::NAN)]).collect()
}

fn polygon_from_rings(rings: &[Vec<Vec<f64>>], land_use: LandUseClass, index: usize) -> Result<ZoningPolygon> {
    let (outer, holes) = rings
        .split_first()
        .ok_or_else(|| Error::InvalidPolygon { index, reason: "polygon has no rings".into() })?;
    Ok(ZoningPolygon {
        exterior: ring_from_json(outer),
        holes: holes.iter().map(|h| ring_from_json(h)).collect(),
        land_use,
    })
}

fn land_use_property(feature: &Feature, index: usize) -> Result<LandUseClass> {
    let value = feature
        .property("land_use")
        .ok_or_else(|| Error::InvalidPolygon { index, reason: "missing property \"land_use\"".into() })?;
    let parsed = match value {
        serde_json::Value::String(s) => s.parse::<LandUseClass>(),
        serde_json::Value::Number(n) => n
            .as_u64()
            .and_then(|c| u8::try_from(c).ok())
            .and_then(LandUseClass::from_code)
            .ok_or_else(|| Error::Parse(format!("land-use code {n} not in 1..=5"))),
        other => Err(Error::Parse(format!("unsupported land_use value {other}"))),
    };
    parsed.map_err(|e| Error::InvalidPolygon { index, reason: e.to_string() })
}

/// Reads a GeoJSON FeatureCollection of Polygon / MultiPolygon features.
///
/// Every polygon is validated; errors name the feature index.
pub fn read_geojson<R: Read>(mut r: R) -> Result<Vec<ZoningPolygon>> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(|e| Error::io("<geojson>", e))?;
    let geojson: GeoJson = text.parse().map_err(|e: geojson::Error| Error::Parse(e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = geojson else {
        return Err(Error::Parse("zoning input must be a GeoJSON FeatureCollection".into()));
    };
    let mut out = Vec::new();
    for (index, feature) in fc.features.iter().enumerate() {
        let land_use = land_use_property(feature, index)?;
        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| Error::InvalidPolygon { index, reason: "feature has no geometry".into() })?;
        let polys = match &geometry.value {
            Value::Polygon(rings) => vec![polygon_from_rings(rings, land_use, index)?],
            Value::MultiPolygon(parts) => parts
                .iter()
                .map(|rings| polygon_from_rings(rings, land_use, index))
                .collect::<Result<_>>()?,
            other => {
                return Err(Error::InvalidPolygon {
                    index,
                    reason: format!("unsupported geometry type {}", other.type_name()),
                })
            }
        };
        for p in &polys {
            p.validate().map_err(|reason| Error::InvalidPolygon { index, reason })?;
        }
        out.extend(polys);
    }
    Ok(out)
}

pub fn write_geojson<W: Write>(polygons: &[ZoningPolygon], mut w: W) -> Result<()> {
    let to_json = |ring: &Vec<Point>| ring.iter().map(|p| vec![p[0], p[1]]).collect::<Vec<_>>();
    let features = polygons
        .iter()
        .map(|p| {
            let mut rings = vec![to_json(&p.exterior)];
            rings.extend(p.holes.iter().map(to_json));
            let mut props = JsonObject::new();
            props.insert("land_use".into(), p.land_use.name().into());
            Feature {
                bbox: None,
                geometry: Some(Geometry::new(Value::Polygon(rings))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    let fc = FeatureCollection { bbox: None, features, foreign_members: None };
    serde_json::to_writer(&mut w, &fc)?;
    w.write_all(b"\n").map_err(|e| Error::io("<geojson>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use LandUseClass::*;

    fn spec() -> GridSpec {
        GridSpec::new(0.0, 0.0, 200.0, 2, 2).unwrap()
    }

    #[test]
    fn full_cover_labels_cell() {
        let polys = [ZoningPolygon::rectangle(0.0, 0.0, 200.0, 200.0, Residential)];
        let g = rasterize_zoning(&polys, &spec(), 0.0).unwrap();
        assert_eq!(g.get(0, 0), Some(Residential));
        assert_eq!(g.get(0, 1), None);
        assert_eq!(g.get(1, 0), None);
    }

    #[test]
    fn majority_share_wins() {
        let polys = [
            ZoningPolygon::rectangle(0.0, 0.0, 120.0, 200.0, Commercial),
            ZoningPolygon::rectangle(120.0, 0.0, 200.0, 200.0, Industrial),
        ];
        let g = rasterize_zoning(&polys, &spec(), 0.0).unwrap();
        assert_eq!(g.get(0, 0), Some(Commercial));
    }

    #[test]
    fn exact_tie_goes_to_lower_code() {
        let polys = [
            ZoningPolygon::rectangle(100.0, 0.0, 200.0, 200.0, Other),
            ZoningPolygon::rectangle(0.0, 0.0, 100.0, 200.0, Parks),
        ];
        let g = rasterize_zoning(&polys, &spec(), 0.0).unwrap();
        assert_eq!(g.get(0, 0), Some(Parks));
    }

    #[test]
    fn min_coverage_floor() {
        let polys = [ZoningPolygon::rectangle(0.0, 0.0, 200.0, 60.0, Parks)];
        assert_eq!(rasterize_zoning(&polys, &spec(), 0.0).unwrap().get(0, 0), Some(Parks));
        assert_eq!(rasterize_zoning(&polys, &spec(), 0.5).unwrap().get(0, 0), None);
        assert!(rasterize_zoning(&polys, &spec(), 1.5).is_err());
    }

    #[test]
    fn hole_subtracts_from_parent_only() {
        let mut res = ZoningPolygon::rectangle(0.0, 0.0, 200.0, 200.0, Residential);
        res.holes.push(vec![[20.0, 20.0], [180.0, 20.0], [180.0, 180.0], [20.0, 180.0], [20.0, 20.0]]);
        let com = ZoningPolygon::rectangle(0.0, 0.0, 200.0, 100.0, Commercial);
        let f = coverage_fractions(&[res.clone(), com.clone()], &spec()).unwrap();
        let res_frac = 1.0 - 160.0 * 160.0 / 40000.0;
        assert!((f[0][Residential.ordinal()] - res_frac).abs() < 1e-12);
        assert!((f[0][Commercial.ordinal()] - 0.5).abs() < 1e-12);
        let g = rasterize_zoning(&[res, com], &spec(), 0.0).unwrap();
        assert_eq!(g.get(0, 0), Some(Commercial));
    }

    #[test]
    fn empty_polygon_list_is_all_unlabeled() {
        let g = rasterize_zoning(&[], &spec(), 0.0).unwrap();
        assert!(g.labels.iter().all(Option::is_none));
    }

    #[test]
    fn invalid_polygon_names_index() {
        let good = ZoningPolygon::rectangle(0.0, 0.0, 10.0, 10.0, Parks);
        let bowtie = ZoningPolygon::new(vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0], [0.0, 0.0]], Parks);
        match rasterize_zoning(&[good, bowtie], &spec(), 0.0) {
            Err(Error::InvalidPolygon { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected invalid polygon error, got {other:?}"),
        }
    }

    #[test]
    fn polygon_straddling_grid_edge() {
        let polys = [ZoningPolygon::rectangle(-100.0, 300.0, 500.0, 500.0, Other)];
        let g = rasterize_zoning(&polys, &spec(), 0.0).unwrap();
        assert_eq!(g.get(1, 0), Some(Other));
        assert_eq!(g.get(1, 1), Some(Other));
        assert_eq!(g.get(0, 0), None);
    }

    #[test]
    fn geojson_round_trip_and_codes() {
        let polys = vec![
            ZoningPolygon::rectangle(0.0, 0.0, 200.0, 200.0, Residential),
            ZoningPolygon::rectangle(200.0, 0.0, 400.0, 200.0, Parks),
        ];
        let mut buf = Vec::new();
        write_geojson(&polys, &mut buf).unwrap();
        assert_eq!(read_geojson(buf.as_slice()).unwrap(), polys);

        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"land_use":4},"geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[2,2],[3,2],[3,3],[2,2]]]]}},
            {"type":"Feature","properties":{"land_use":"COMMERCIAL"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}
        ]}"#;
        let parsed = read_geojson(text.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0].land_use, Parks);
        assert_eq!(parsed[2].land_use, Commercial);
    }

    #[test]
    fn geojson_errors_name_feature() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"land_use":"Parks"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
            {"type":"Feature","properties":{"land_use":"water"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}
        ]}"#;
        assert!(matches!(read_geojson(text.as_bytes()), Err(Error::InvalidPolygon { index: 1, .. })));
        let open = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"land_use":"Parks"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}
        ]}"#;
        assert!(matches!(read_geojson(open.as_bytes()), Err(Error::InvalidPolygon { index: 0, .. })));
    }
}
