//! GIS layers: geometries with per-feature attribute tables, loaded from and
//! written to GeoJSON (WGS84 lon/lat on disk, projected meters in memory).

use std::collections::BTreeMap;
use std::path::Path;

use geojson::{GeoJson, Value};
use serde_json::{Map, Value as Json};

use super::{ring_signed_area, BBox, PointXY, Polygon, Polyline, Projection, MIN_POLYGON_AREA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Number(f64),
    Text(String),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(PointXY),
    Lines(Vec<Polyline>),
    Polygons(Vec<Polygon>),
}

impl Geometry {
    pub fn bbox(&self) -> BBox {
        match self {
            Geometry::Point(p) => BBox { min: *p, max: *p },
            Geometry::Lines(ls) => ls.iter().skip(1).fold(*ls[0].bbox(), |b, l| b.union(l.bbox())),
            Geometry::Polygons(ps) => ps.iter().skip(1).fold(*ps[0].bbox(), |b, p| b.union(p.bbox())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub geometry: Geometry,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Feature {
    pub fn new(geometry: Geometry) -> Self {
        Self {
            geometry,
            attributes: BTreeMap::new(),
        }
    }

    /// Numeric attribute value; `None` when absent, null or non-numeric.
    pub fn number(&self, key: &str) -> Option<f64> {
        match self.attributes.get(key) {
            Some(AttrValue::Number(v)) if v.is_finite() => Some(*v),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.attributes.get(key) {
            Some(AttrValue::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self, key: &str) -> bool {
        self.number(key).is_none()
    }

    pub fn set_number(&mut self, key: &str, v: f64) {
        self.attributes.insert(key.to_string(), AttrValue::Number(v));
    }

    pub fn set_text(&mut self, key: &str, v: &str) {
        self.attributes.insert(key.to_string(), AttrValue::Text(v.to_string()));
    }

    pub fn set_missing(&mut self, key: &str) {
        self.attributes.insert(key.to_string(), AttrValue::Missing);
    }

    pub fn polygons(&self) -> &[Polygon] {
        match &self.geometry {
            Geometry::Polygons(p) => p,
            _ => &[],
        }
    }

    pub fn lines(&self) -> &[Polyline] {
        match &self.geometry {
            Geometry::Lines(l) => l,
            _ => &[],
        }
    }

    pub fn point(&self) -> Option<PointXY> {
        match &self.geometry {
            Geometry::Point(p) => Some(*p),
            _ => None,
        }
    }

    /// Total polygon area (zero for points and lines).
    pub fn area(&self) -> f64 {
        self.polygons().iter().map(Polygon::area).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layer {
    pub name: String,
    pub features: Vec<Feature>,
}

impl Layer {
    pub fn new(name: impl Into<String>, features: Vec<Feature>) -> Self {
        Self {
            name: name.into(),
            features,
        }
    }
}

fn ring_from(coords: &[Vec<f64>], proj: &Projection) -> Result<Vec<PointXY>> {
    coords
        .iter()
        .map(|c| {
            if c.len() < 2 {
                Err(Error::Geometry("position with fewer than 2 coordinates".into()))
            } else {
                Ok(proj.forward(c[0], c[1]))
            }
        })
        .collect()
}

fn polygon_from(
    rings: &[Vec<Vec<f64>>],
    proj: &Projection,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<Polygon>> {
    let Some((ext, holes)) = rings.split_first() else {
        return Err(Error::Geometry(format!("{label}: polygon without rings")));
    };
    let mut ext = ring_from(ext, proj)?;
    ext.dedup();
    if ext.len() > 1 && ext.first() == ext.last() {
        ext.pop();
    }
    if ext.len() < 3 || ring_signed_area(&ext).abs() < MIN_POLYGON_AREA {
        warnings.push(format!("{label}: dropped degenerate polygon"));
        return Ok(None);
    }
    let holes = holes.iter().map(|h| ring_from(h, proj)).collect::<Result<Vec<_>>>()?;
    Polygon::new(ext, holes)
        .map(Some)
        .map_err(|e| Error::Geometry(format!("{label}: {e}")))
}

fn geometry_from(value: &Value, proj: &Projection, label: &str, warnings: &mut Vec<String>) -> Result<Option<Geometry>> {
    let line = |coords: &Vec<Vec<f64>>| -> Result<Polyline> {
        Polyline::new(ring_from(coords, proj)?).map_err(|e| Error::Geometry(format!("{label}: {e}")))
    };
    let geom = match value {
        Value::Point(c) => {
            if c.len() < 2 {
                return Err(Error::Geometry(format!("{label}: point with fewer than 2 coordinates")));
            }
            Geometry::Point(proj.forward(c[0], c[1]))
        }
        Value::LineString(c) => Geometry::Lines(vec![line(c)?]),
        Value::MultiLineString(cs) => Geometry::Lines(cs.iter().map(line).collect::<Result<_>>()?),
        Value::Polygon(rings) => match polygon_from(rings, proj, label, warnings)? {
            Some(p) => Geometry::Polygons(vec![p]),
            None => return Ok(None),
        },
        Value::MultiPolygon(polys) => {
            let mut parts = Vec::new();
            for rings in polys {
                if let Some(p) = polygon_from(rings, proj, label, warnings)? {
                    parts.push(p);
                }
            }
            if parts.is_empty() {
                return Ok(None);
            }
            Geometry::Polygons(parts)
        }
        other => {
            return Err(Error::Geometry(format!(
                "{label}: unsupported geometry type {}",
                other.type_name()
            )))
        }
    };
    Ok(Some(geom))
}

fn attr_from(v: &Json) -> AttrValue {
    match v {
        Json::Number(n) => n.as_f64().map_or(AttrValue::Missing, AttrValue::Number),
        Json::Bool(b) => AttrValue::Number(if *b { 1.0 } else { 0.0 }),
        Json::String(s) => AttrValue::Text(s.clone()),
        _ => AttrValue::Missing,
    }
}

/// Parses a GeoJSON FeatureCollection. Degenerate polygons are dropped and
/// reported in the returned warnings; invalid geometry is an error.
pub fn layer_from_geojson_str(name: &str, text: &str, proj: &Projection) -> Result<(Layer, Vec<String>)> {
    let gj: GeoJson = text
        .parse()
        .map_err(|e: geojson::Error| Error::schema(name, format!("invalid GeoJSON: {e}")))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(Error::schema(name, "expected a FeatureCollection"));
    };
    let mut warnings = Vec::new();
    let mut features = Vec::with_capacity(fc.features.len());
    for (i, f) in fc.features.iter().enumerate() {
        let label = format!("{name} feature {i}");
        let Some(g) = &f.geometry else {
            warnings.push(format!("{label}: dropped feature without geometry"));
            continue;
        };
        let Some(geometry) = geometry_from(&g.value, proj, &label, &mut warnings)? else {
            continue;
        };
        let mut feat = Feature::new(geometry);
        if let Some(props) = &f.properties {
            for (k, v) in props {
                feat.attributes.insert(k.clone(), attr_from(v));
            }
        }
        features.push(feat);
    }
    Ok((Layer::new(name, features), warnings))
}

pub fn read_geojson(path: &Path, name: &str, proj: &Projection) -> Result<(Layer, Vec<String>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::schema(path.display().to_string(), format!("cannot read: {e}")))?;
    layer_from_geojson_str(name, &text, proj)
}

fn position(p: PointXY, proj: &Projection) -> Vec<f64> {
    let (lon, lat) = proj.inverse(p);
    vec![lon, lat]
}

fn closed_ring(ring: &[PointXY], proj: &Projection) -> Vec<Vec<f64>> {
    ring.iter().chain(ring.first()).map(|p| position(*p, proj)).collect()
}

fn polygon_value(p: &Polygon, proj: &Projection) -> Vec<Vec<Vec<f64>>> {
    p.rings().map(|r| closed_ring(r, proj)).collect()
}

/// Serializes a layer as a GeoJSON FeatureCollection in lon/lat.
pub fn layer_to_geojson_string(layer: &Layer, proj: &Projection) -> String {
    let features = layer
        .features
        .iter()
        .map(|f| {
            let value = match &f.geometry {
                Geometry::Point(p) => Value::Point(position(*p, proj)),
                Geometry::Lines(ls) if ls.len() == 1 => {
                    Value::LineString(ls[0].vertices().iter().map(|p| position(*p, proj)).collect())
                }
                Geometry::Lines(ls) => Value::MultiLineString(
                    ls.iter()
                        .map(|l| l.vertices().iter().map(|p| position(*p, proj)).collect())
                        .collect(),
                ),
                Geometry::Polygons(ps) if ps.len() == 1 => Value::Polygon(polygon_value(&ps[0], proj)),
                Geometry::Polygons(ps) => Value::MultiPolygon(ps.iter().map(|p| polygon_value(p, proj)).collect()),
            };
            let mut props = Map::new();
            for (k, v) in &f.attributes {
                let j = match v {
                    AttrValue::Number(x) => serde_json::Number::from_f64(*x).map_or(Json::Null, Json::Number),
                    AttrValue::Text(s) => Json::String(s.clone()),
                    AttrValue::Missing => Json::Null,
                };
                props.insert(k.clone(), j);
            }
            geojson::Feature {
                bbox: None,
                geometry: Some(geojson::Geometry::new(value)),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    GeoJson::FeatureCollection(geojson::FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    })
    .to_string()
}

pub fn write_geojson(path: &Path, layer: &Layer, proj: &Projection) -> Result<()> {
    std::fs::write(path, layer_to_geojson_string(layer, proj))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"type":"FeatureCollection","features":[
      {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[5.0,52.0],[5.01,52.0],[5.01,52.01],[5.0,52.01],[5.0,52.0]]]},
       "properties":{"population":120,"name":"a","income":null}},
      {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[5.0,52.0],[5.0,52.0],[5.0,52.0],[5.0,52.0]]]},
       "properties":{"population":3}},
      {"type":"Feature","geometry":{"type":"LineString","coordinates":[[5.0,52.0],[5.02,52.0]]},"properties":{"flow":10}},
      {"type":"Feature","geometry":{"type":"Point","coordinates":[5.005,52.005]},"properties":{"category":"food"}}
    ]}"#;

    #[test]
    fn parses_and_drops_degenerate() {
        let proj = Projection::new(52.0);
        let (layer, warnings) = layer_from_geojson_str("test", DOC, &proj).unwrap();
        assert_eq!(layer.features.len(), 3);
        assert_eq!(warnings.len(), 1);
        let f = &layer.features[0];
        assert_eq!(f.number("population"), Some(120.0));
        assert!(f.is_missing("income"));
        assert_eq!(f.text("name"), Some("a"));
        // 0.01° × 0.01° at 52°N ≈ 684.6 m × 1111.9 m
        assert!(f.area() > 760_000.0 && f.area() < 763_000.0, "{}", f.area());
        assert_eq!(layer.features[2].text("category"), Some("food"));
    }

    #[test]
    fn rejects_self_intersection() {
        let bad = r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Polygon",
          "coordinates":[[[0,0],[2,2],[2,0],[0,1],[0,0]]]},"properties":{}}]}"#;
        assert!(layer_from_geojson_str("bad", bad, &Projection::new(0.0)).is_err());
    }

    #[test]
    fn round_trips_through_text() {
        let proj = Projection::new(52.0);
        let (layer, _) = layer_from_geojson_str("test", DOC, &proj).unwrap();
        let text = layer_to_geojson_string(&layer, &proj);
        let (again, w) = layer_from_geojson_str("test", &text, &proj).unwrap();
        assert!(w.is_empty());
        assert_eq!(again.features.len(), layer.features.len());
        let (a, b) = (layer.features[0].area(), again.features[0].area());
        assert!((a - b).abs() / a < 1e-9);
        assert_eq!(text, layer_to_geojson_string(&again, &proj));
    }
}
