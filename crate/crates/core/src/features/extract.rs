//! Buffer-based predictor extraction from prepared layers.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use super::impute::{impute_layer, ImputationCount};
use super::manifest::{AttributeKind, AttributeSpec, LayerSpec, Manifest};
use super::{ColumnKind, ColumnMeta, FeatureMatrix};
use crate::error::{Error, Result};
use crate::geo::layer::{read_geojson, AttrValue, Feature, Geometry, Layer};
use crate::geo::{
    intersection_area, make_buffer, point_in_polygon, polyline_length_within, BufferSpec, PointXY, Polygon, Projection,
};
use crate::ingest::{PoolRecord, Rollout};

/// Area of one polygon feature's overlap with a buffer.
#[derive(Debug, Clone, Copy)]
pub struct Overlap<'a> {
    pub feature: &'a Feature,
    pub intersection: f64,
    pub area: f64,
}

/// Polygon features overlapping `buffer` with positive intersection area.
pub fn overlaps<'a>(layer: &'a Layer, buffer: &Polygon) -> Vec<Overlap<'a>> {
    let bb = buffer.bbox();
    layer
        .features
        .iter()
        .filter_map(|f| {
            let parts = f.polygons();
            if parts.is_empty() || !f.geometry.bbox().intersects(bb) {
                return None;
            }
            let ia: f64 = parts.iter().map(|p| intersection_area(p, buffer)).sum();
            (ia > 0.0).then(|| Overlap {
                feature: f,
                intersection: ia,
                area: f.area(),
            })
        })
        .collect()
}

/// Sum of `value · intersection/area`. Missing when any overlapping polygon
/// lacks the value.
pub fn extract_extensive(overlaps: &[Overlap], attribute: &str) -> Option<f64> {
    let mut total = 0.0;
    for o in overlaps {
        total += o.feature.number(attribute)? * o.intersection / o.area;
    }
    Some(total)
}

/// Weighted mean of `attribute`. Weights are intersection areas, or the
/// extensive estimate of `weight` within the intersection. Polygons lacking
/// the value or the weight are skipped; zero total weight gives `None`.
pub fn extract_intensive(overlaps: &[Overlap], attribute: &str, weight: Option<&str>) -> Option<f64> {
    let (mut sw, mut swv) = (0.0, 0.0);
    for o in overlaps {
        let Some(v) = o.feature.number(attribute) else { continue };
        let w = match weight {
            None => o.intersection,
            Some(name) => match o.feature.number(name) {
                Some(wv) => wv * o.intersection / o.area,
                None => continue,
            },
        };
        sw += w;
        swv += w * v;
    }
    (sw > 0.0).then(|| swv / sw)
}

fn category_key(v: Option<&AttrValue>) -> Option<String> {
    match v {
        Some(AttrValue::Text(s)) => Some(s.clone()),
        Some(AttrValue::Number(x)) if x.is_finite() => Some(x.to_string()),
        _ => None,
    }
}

/// Share of the buffer area covered by each category, in `categories` order.
pub fn extract_categorical(overlaps: &[Overlap], attribute: &str, categories: &[String], buffer_area: f64) -> Vec<f64> {
    let mut out = vec![0.0; categories.len()];
    for o in overlaps {
        if let Some(k) = category_key(o.feature.attributes.get(attribute)) {
            if let Some(i) = categories.iter().position(|c| *c == k) {
                out[i] += o.intersection;
            }
        }
    }
    for v in &mut out {
        *v = (*v / buffer_area).clamp(0.0, 1.0);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadFeatures {
    pub closest_flows: Vec<Option<f64>>,
    pub closest_type: Vec<Option<f64>>,
    pub traffic_density: Option<f64>,
    pub road_density: Option<f64>,
}

pub struct RoadSpec<'a> {
    pub flow_attributes: &'a [String],
    pub density_flow_attribute: &'a str,
    pub type_attribute: &'a str,
    pub road_types: &'a [String],
}

pub fn extract_road_features(roads: &Layer, spec: &RoadSpec, location: PointXY, buffer: &Polygon) -> RoadFeatures {
    let mut closest: Option<(f64, &Feature)> = None;
    for f in &roads.features {
        for l in f.lines() {
            let d = l.distance_to(location);
            if closest.map_or(true, |(best, _)| d < best) {
                closest = Some((d, f));
            }
        }
    }
    let Some((_, near)) = closest else {
        return RoadFeatures {
            closest_flows: vec![None; spec.flow_attributes.len()],
            closest_type: vec![None; spec.road_types.len()],
            traffic_density: None,
            road_density: None,
        };
    };
    let closest_flows = spec.flow_attributes.iter().map(|a| near.number(a)).collect();
    let ty = category_key(near.attributes.get(spec.type_attribute));
    let closest_type = spec
        .road_types
        .iter()
        .map(|t| Some(if ty.as_deref() == Some(t.as_str()) { 1.0 } else { 0.0 }))
        .collect();

    let area = buffer.area();
    let bb = buffer.bbox();
    let (mut length, mut weighted) = (0.0, Some(0.0));
    for f in &roads.features {
        if f.lines().is_empty() || !f.geometry.bbox().intersects(bb) {
            continue;
        }
        let clipped: f64 = f.lines().iter().map(|l| polyline_length_within(l, buffer)).sum();
        if clipped > 0.0 {
            length += clipped;
            weighted = match (weighted, f.number(spec.density_flow_attribute)) {
                (Some(acc), Some(flow)) => Some(acc + clipped * flow),
                _ => None,
            };
        }
    }
    RoadFeatures {
        closest_flows,
        closest_type,
        traffic_density: weighted.map(|w| w / area),
        road_density: Some(length / area),
    }
}

/// Points per square meter inside `buffer` and distance to the nearest point,
/// ignoring points closer than `exclude_within_m` to `location`.
pub fn extract_point_features(
    points: &[PointXY],
    location: PointXY,
    buffer: &Polygon,
    exclude_within_m: f64,
) -> (f64, Option<f64>) {
    let mut count = 0usize;
    let mut nearest = f64::INFINITY;
    for p in points {
        let d = p.distance(&location);
        if d < exclude_within_m {
            continue;
        }
        nearest = nearest.min(d);
        if point_in_polygon(buffer, *p) {
            count += 1;
        }
    }
    (count as f64 / buffer.area(), nearest.is_finite().then_some(nearest))
}

pub const POOL_FEATURES: [&str; 5] = [
    "pool.n_connectors",
    "pool.max_power_kw",
    "pool.latitude",
    "pool.longitude",
    "pool.rollout_strategic",
];

pub fn extract_pool_features(pool: &PoolRecord, proj: &Projection) -> [f64; 5] {
    let (lon, lat) = proj.inverse(pool.location);
    [
        pool.n_connectors as f64,
        pool.max_power_kw,
        lat,
        lon,
        if pool.rollout == Rollout::Strategic { 1.0 } else { 0.0 },
    ]
}

/// A loaded layer with per-kind lookup structures.
pub struct PreparedLayer {
    pub spec: LayerSpec,
    pub layer: Layer,
    /// Points grouped by category (one group when uncategorized).
    point_groups: Vec<Vec<PointXY>>,
    raster: Vec<(PointXY, usize)>,
}

impl PreparedLayer {
    pub fn new(spec: LayerSpec, layer: Layer) -> Result<Self> {
        let expect = |ok: fn(&Geometry) -> bool, what: &str| -> Result<()> {
            match layer.features.iter().find(|f| !ok(&f.geometry)) {
                Some(_) => Err(Error::schema(
                    spec.file(),
                    format!("layer `{}` must contain only {what} features", spec.name()),
                )),
                None => Ok(()),
            }
        };
        let require = |attr: &str| -> Result<()> {
            if !layer.features.is_empty() && !layer.features.iter().any(|f| f.attributes.contains_key(attr)) {
                return Err(Error::schema(spec.file(), format!("missing attribute `{attr}`")));
            }
            Ok(())
        };
        let mut point_groups = Vec::new();
        let mut raster = Vec::new();
        match &spec {
            LayerSpec::Polygons { attributes, .. } => {
                expect(|g| matches!(g, Geometry::Polygons(_)), "polygon")?;
                for a in attributes {
                    require(&a.name)?;
                }
            }
            LayerSpec::Roads {
                flow_attributes,
                density_flow_attribute,
                type_attribute,
                ..
            } => {
                expect(|g| matches!(g, Geometry::Lines(_)), "line")?;
                for a in flow_attributes.iter().chain([density_flow_attribute, type_attribute]) {
                    require(a)?;
                }
            }
            LayerSpec::Points {
                category_attribute,
                categories,
                ..
            } => {
                expect(|g| matches!(g, Geometry::Point(_)), "point")?;
                match category_attribute {
                    Some(attr) => {
                        require(attr)?;
                        point_groups = vec![Vec::new(); categories.len()];
                        for f in &layer.features {
                            let key = category_key(f.attributes.get(attr));
                            if let Some(i) = categories.iter().position(|c| Some(c) == key.as_ref()) {
                                point_groups[i].push(f.point().expect("checked"));
                            }
                        }
                    }
                    None => point_groups = vec![layer.features.iter().filter_map(Feature::point).collect()],
                }
            }
            LayerSpec::RasterPoints { value_attributes, .. } => {
                expect(|g| matches!(g, Geometry::Point(_)), "point")?;
                for a in value_attributes {
                    require(a)?;
                }
                raster = layer
                    .features
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (f.point().expect("checked"), i))
                    .collect();
            }
        }
        Ok(Self {
            spec,
            layer,
            point_groups,
            raster,
        })
    }

    fn extract(&self, pool: &PoolRecord, buffer: &Polygon, out: &mut Vec<f64>) {
        let area = buffer.area();
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        match &self.spec {
            LayerSpec::Polygons { attributes, .. } => {
                let ov = overlaps(&self.layer, buffer);
                for a in attributes {
                    match a.kind {
                        AttributeKind::Extensive => out.push(nan(extract_extensive(&ov, &a.name))),
                        AttributeKind::Intensive => {
                            out.push(nan(extract_intensive(&ov, &a.name, a.weight_attribute.as_deref())))
                        }
                        AttributeKind::Categorical => {
                            out.extend(extract_categorical(&ov, &a.name, &a.categories, area))
                        }
                    }
                }
            }
            LayerSpec::Roads {
                flow_attributes,
                density_flow_attribute,
                type_attribute,
                road_types,
                ..
            } => {
                let spec = RoadSpec {
                    flow_attributes,
                    density_flow_attribute,
                    type_attribute,
                    road_types,
                };
                let r = extract_road_features(&self.layer, &spec, pool.location, buffer);
                out.extend(r.closest_flows.into_iter().map(nan));
                out.extend(r.closest_type.into_iter().map(nan));
                out.push(nan(r.traffic_density));
                out.push(nan(r.road_density));
            }
            LayerSpec::Points { exclude_within_m, .. } => {
                for group in &self.point_groups {
                    let (density, nearest) = extract_point_features(group, pool.location, buffer, *exclude_within_m);
                    out.push(density);
                    out.push(nan(nearest));
                }
            }
            LayerSpec::RasterPoints { value_attributes, .. } => {
                let cell = self
                    .raster
                    .iter()
                    .map(|(p, i)| (p.distance(&pool.location), *i))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                for a in value_attributes {
                    out.push(nan(cell.and_then(|(_, i)| self.layer.features[i].number(a))));
                }
            }
        }
    }

    fn column_meta(&self) -> Vec<ColumnMeta> {
        let names = self.spec.predictor_names();
        let source = self.spec.name().to_string();
        let kinds: Vec<ColumnKind> = match &self.spec {
            LayerSpec::Polygons { attributes, .. } => attributes
                .iter()
                .flat_map(|a: &AttributeSpec| {
                    let k = match a.kind {
                        AttributeKind::Extensive => ColumnKind::Extensive,
                        AttributeKind::Intensive => ColumnKind::Intensive,
                        AttributeKind::Categorical => ColumnKind::CategoryShare,
                    };
                    let n = if a.kind == AttributeKind::Categorical { a.categories.len() } else { 1 };
                    std::iter::repeat(k).take(n)
                })
                .collect(),
            LayerSpec::Roads {
                flow_attributes,
                road_types,
                ..
            } => std::iter::repeat(ColumnKind::RoadFlow)
                .take(flow_attributes.len())
                .chain(std::iter::repeat(ColumnKind::RoadType).take(road_types.len()))
                .chain([ColumnKind::TrafficDensity, ColumnKind::RoadDensity])
                .collect(),
            LayerSpec::Points { .. } => (0..self.point_groups.len())
                .flat_map(|_| [ColumnKind::PointDensity, ColumnKind::PointDistance])
                .collect(),
            LayerSpec::RasterPoints { value_attributes, .. } => vec![ColumnKind::Raster; value_attributes.len()],
        };
        names
            .into_iter()
            .zip(kinds)
            .map(|(name, kind)| ColumnMeta {
                name,
                source: source.clone(),
                kind,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct LoadReport {
    pub imputation: Vec<(String, Vec<ImputationCount>)>,
    pub warnings: Vec<String>,
}

/// Reads every layer named in the manifest (paths relative to `base_dir`)
/// and applies the polygon imputation rules.
pub fn load_layers(manifest: &Manifest, base_dir: &Path, proj: &Projection) -> Result<(Vec<PreparedLayer>, LoadReport)> {
    manifest.validate()?;
    let mut report = LoadReport::default();
    let mut out = Vec::with_capacity(manifest.layers.len());
    for spec in &manifest.layers {
        let (mut layer, warnings) = read_geojson(&base_dir.join(spec.file()), spec.name(), proj)?;
        report.warnings.extend(warnings);
        if let LayerSpec::Polygons { imputation, .. } = spec {
            let counts = impute_layer(&mut layer, imputation);
            report.imputation.push((spec.name().to_string(), counts));
        }
        out.push(PreparedLayer::new(spec.clone(), layer)?);
    }
    Ok((out, report))
}

/// Raw predictor matrix (NaN = missing), one row per pool, pool attributes last.
pub fn extract_matrix(
    pools: &[PoolRecord],
    layers: &[PreparedLayer],
    buffer: &BufferSpec,
    proj: &Projection,
) -> Result<FeatureMatrix> {
    buffer.validate()?;
    let mut columns: Vec<ColumnMeta> = layers.iter().flat_map(PreparedLayer::column_meta).collect();
    columns.extend(POOL_FEATURES.iter().map(|n| ColumnMeta {
        name: n.to_string(),
        source: "pool".into(),
        kind: ColumnKind::Pool,
    }));
    let p = columns.len();
    let rows: Vec<Vec<f64>> = pools
        .par_iter()
        .map(|pool| {
            let poly = make_buffer(pool.location, buffer);
            let mut row = Vec::with_capacity(p);
            for l in layers {
                l.extract(pool, &poly, &mut row);
            }
            row.extend(extract_pool_features(pool, proj));
            row
        })
        .collect();
    let mut values = Array2::from_elem((pools.len(), p), f64::NAN);
    for (i, row) in rows.iter().enumerate() {
        debug_assert_eq!(row.len(), p);
        for (j, v) in row.iter().enumerate() {
            values[[i, j]] = *v;
        }
    }
    FeatureMatrix::new(pools.iter().map(|p| p.pool_id.clone()).collect(), columns, values)
}
