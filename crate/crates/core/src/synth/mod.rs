//! Synthetic scenarios: GIS layers, stations and transactions with a planted
//! sparse logistic signal. Everything is written in the same file formats the
//! ingestion and extraction steps read, and the planted predictors are chosen
//! from the matrix those steps produce.

pub mod voronoi;

use std::fs;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::features::manifest::{AttributeSpec, ImputationRule, LayerSpec, Manifest, MANIFEST_VERSION};
use crate::features::FeatureMatrix;
use crate::geo::layer::{write_geojson, Feature, Geometry, Layer};
use crate::geo::{BBox, PointXY, Polygon, Polyline, Projection};
use crate::ingest::io::{write_stations, write_transactions};
use crate::ingest::{aggregate_pools, label_top, PoolRecord, Rollout, StationRecord, Transaction};
use crate::pipeline::build_features;
use crate::rng::{stream, Purpose};
use voronoi::voronoi_cells;

pub const POI_CATEGORIES: [&str; 20] = [
    "food",
    "retail",
    "supermarket",
    "hotel",
    "school",
    "office",
    "hospital",
    "parking",
    "fuel",
    "bank",
    "cinema",
    "gym",
    "library",
    "museum",
    "church",
    "pharmacy",
    "post",
    "bar",
    "cafe",
    "park_entrance",
];

pub const LANDUSE_CLASSES: [&str; 20] = [
    "residential",
    "commercial",
    "industrial",
    "agriculture",
    "forest",
    "water",
    "park",
    "sport",
    "retail",
    "office",
    "education",
    "health",
    "transport",
    "parking",
    "cemetery",
    "construction",
    "recreation",
    "wetland",
    "mixed",
    "vacant",
];

pub const ROAD_TYPES: [&str; 5] = ["motorway", "primary", "secondary", "tertiary", "residential"];
pub const ROAD_FLOWS: [&str; 4] = ["flow_total", "flow_car", "flow_truck", "flow_peak"];
pub const URBANITY_CLASSES: [&str; 5] = ["1", "2", "3", "4", "5"];

/// How much noise is added to the planted signal before ranking pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Noise sd as a multiple of the signal sd.
    Relative(f64),
    /// Noise sd chosen so the signal's AUC against the labels is this value.
    TargetOracleAuc(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub predictor: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub center_lon: f64,
    pub center_lat: f64,
    /// Side of the square study area.
    pub bbox_km: f64,
    pub n_neighbourhoods: usize,
    pub n_districts: usize,
    pub n_landuse: usize,
    pub n_roads: usize,
    pub n_poi_categories: usize,
    pub poi_per_category: usize,
    pub n_extra_competitors: usize,
    pub raster_cell_m: f64,
    pub n_pools: usize,
    pub min_pool_separation_m: f64,
    pub second_station_fraction: f64,
    pub n_rfids: usize,
    /// Number of planted predictors when `planted` is not given.
    pub sparsity: usize,
    /// Planted magnitudes are `coefficient_scale · U(0.75, 1.25)`.
    pub coefficient_scale: f64,
    /// Fixed planted coefficients on standardized predictors; chosen from
    /// the extracted matrix when absent.
    pub planted: Option<Vec<PlantedTerm>>,
    pub noise: NoiseSpec,
    pub top_fraction: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 2015,
            center_lon: 5.12,
            center_lat: 52.09,
            bbox_km: 30.0,
            n_neighbourhoods: 500,
            n_districts: 60,
            n_landuse: 1500,
            n_roads: 400,
            n_poi_categories: 20,
            poi_per_category: 250,
            n_extra_competitors: 200,
            raster_cell_m: 500.0,
            n_pools: 1200,
            min_pool_separation_m: 150.0,
            second_station_fraction: 0.15,
            n_rfids: 40_000,
            sparsity: 10,
            coefficient_scale: 1.0,
            planted: None,
            noise: NoiseSpec::TargetOracleAuc(0.9),
            top_fraction: 0.25,
        }
    }
}

impl ScenarioSpec {
    /// A scaled-down scenario for quick runs.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            bbox_km: 12.0,
            n_neighbourhoods: 120,
            n_districts: 12,
            n_landuse: 300,
            n_roads: 80,
            n_poi_categories: 6,
            poi_per_category: 60,
            n_extra_competitors: 30,
            raster_cell_m: 1000.0,
            n_pools: 200,
            n_rfids: 8000,
            sparsity: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("scenario: {m}")));
        let counts = [
            self.n_neighbourhoods,
            self.n_districts,
            self.n_landuse,
            self.n_roads,
            self.n_poi_categories,
            self.poi_per_category,
            self.n_pools,
            self.n_rfids,
        ];
        if counts.contains(&0) {
            return bad("all counts must be positive");
        }
        if self.n_poi_categories > POI_CATEGORIES.len() {
            return bad("too many POI categories");
        }
        if !(self.bbox_km > 2.0 && self.raster_cell_m > 0.0 && self.min_pool_separation_m > 60.0) {
            return bad("study area, raster cell or pool separation out of range");
        }
        if !(0.0..=1.0).contains(&self.second_station_fraction) || !(self.top_fraction > 0.0 && self.top_fraction < 1.0)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.coefficient_scale >= 0.0) {
            return bad("coefficient_scale must be non-negative");
        }
        match self.noise {
            NoiseSpec::Relative(r) if !(r >= 0.0 && r.is_finite()) => bad("relative noise must be non-negative"),
            NoiseSpec::TargetOracleAuc(a) if !(a > 0.5 && a <= 1.0) => bad("target oracle AUC must lie in (0.5, 1]"),
            _ => Ok(()),
        }
    }

    fn bbox(&self) -> BBox {
        let h = self.bbox_km * 500.0;
        BBox {
            min: PointXY::new(-h, -h),
            max: PointXY::new(h, h),
        }
    }

    /// Projection whose origin is the area's centre.
    fn projection(&self) -> (Projection, PointXY) {
        let proj = Projection::new(self.center_lat);
        (proj, proj.forward(self.center_lon, self.center_lat))
    }
}

/// Smooth spatial fields, each a sum of Gaussian bumps. Attributes, class
/// probabilities and POI intensities are all driven by them.
struct LatentFields {
    bumps: Vec<Vec<(PointXY, f64, f64)>>,
}

const N_FIELDS: usize = 5;

impl LatentFields {
    fn new(bbox: &BBox, rng: &mut ChaCha8Rng) -> Self {
        let side = bbox.max.x - bbox.min.x;
        let counts = [6, 4, 10, 5, 8];
        let bumps = counts
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| {
                        let c = random_point(bbox, rng);
                        let sd = side * rng.random_range(0.05..0.2);
                        (c, sd, rng.random_range(0.4..1.0))
                    })
                    .collect()
            })
            .collect();
        Self { bumps }
    }

    fn eval(&self, p: PointXY) -> [f64; N_FIELDS] {
        let mut out = [0.0; N_FIELDS];
        for (k, bs) in self.bumps.iter().enumerate() {
            out[k] = bs
                .iter()
                .map(|(c, sd, a)| a * (-(p.distance(c).powi(2)) / (2.0 * sd * sd)).exp())
                .sum();
        }
        out
    }
}

fn random_point(bbox: &BBox, rng: &mut ChaCha8Rng) -> PointXY {
    PointXY::new(
        rng.random_range(bbox.min.x..bbox.max.x),
        rng.random_range(bbox.min.y..bbox.max.y),
    )
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random linear response to the latent fields.
struct Loading {
    w: [f64; N_FIELDS],
    intercept: f64,
    noise: f64,
}

impl Loading {
    fn new(rng: &mut ChaCha8Rng, strength: f64, noise: f64) -> Self {
        let mut w = [0.0; N_FIELDS];
        for v in &mut w {
            *v = strength * gauss(rng);
        }
        Self {
            w,
            intercept: 0.0,
            noise,
        }
    }

    fn linear(&self, f: &[f64; N_FIELDS]) -> f64 {
        self.intercept + self.w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
    }

    fn draw(&self, f: &[f64; N_FIELDS], rng: &mut ChaCha8Rng) -> f64 {
        self.linear(f) + self.noise * gauss(rng)
    }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let m = 10f64.powi(digits);
    (v * m).round() / m
}

/// Voronoi partition of the area into `n` polygons with their centroids.
fn partition(n: usize, bbox: &BBox, rng: &mut ChaCha8Rng) -> Result<Vec<(Polygon, PointXY)>> {
    let sites: Vec<PointXY> = (0..n).map(|_| random_point(bbox, rng)).collect();
    voronoi_cells(&sites, bbox)
        .into_iter()
        .map(|ring| {
            let p = Polygon::new(ring, vec![])?;
            let c = p.centroid();
            Ok((p, c))
        })
        .collect()
}

/// Attribute tables of a polygon layer: `n_ext` extensive counts (the first
/// is the population) and `n_int` intensive values (the first is the mean
/// income in k€, weighted by population). Counts are area × a density of
/// 10 to 10⁴ per km²; intensive values stay within a factor ~5 of their base.
fn polygon_attributes(
    cells: &[(Polygon, PointXY)],
    fields: &LatentFields,
    n_ext: usize,
    n_int: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Feature>, Vec<AttributeSpec>) {
    let ext_names: Vec<String> = (0..n_ext)
        .map(|k| match k {
            0 => "population".to_string(),
            1 => "households".to_string(),
            2 => "cars".to_string(),
            _ => format!("count_{k:02}"),
        })
        .collect();
    let int_names: Vec<String> = (0..n_int)
        .map(|k| match k {
            0 => "income".to_string(),
            1 => "household_size".to_string(),
            _ => format!("ratio_{k:02}"),
        })
        .collect();
    let ext: Vec<(Loading, f64)> = (0..n_ext)
        .map(|k| {
            let l = Loading::new(rng, 1.2, 0.35);
            let base = if k == 0 { 3000.0 } else { rng.random_range(20.0..2000.0) };
            (l, base)
        })
        .collect();
    let int: Vec<(Loading, f64)> = (0..n_int)
        .map(|k| {
            let l = Loading::new(rng, 0.6, 0.2);
            let base = match k {
                0 => 30.0,
                1 => 2.2,
                _ => rng.random_range(0.05..100.0),
            };
            (l, base)
        })
        .collect();
    let features = cells
        .iter()
        .map(|(poly, c)| {
            let f = fields.eval(*c);
            let km2 = poly.area() / 1e6;
            let mut feat = Feature::new(Geometry::Polygons(vec![poly.clone()]));
            for (name, (l, base)) in ext_names.iter().zip(&ext) {
                feat.set_number(name, (km2 * base * l.draw(&f, rng).exp()).round());
            }
            for (name, (l, base)) in int_names.iter().zip(&int) {
                feat.set_number(name, round_to(base * l.draw(&f, rng).exp(), 3));
            }
            feat
        })
        .collect();
    let mut specs: Vec<AttributeSpec> = ext_names.iter().map(|n| AttributeSpec::extensive(n)).collect();
    for (k, n) in int_names.iter().enumerate() {
        specs.push(AttributeSpec::intensive(n, (k == 0).then_some("population")));
    }
    (features, specs)
}

fn quantiles(values: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    qs.iter()
        .map(|q| v[((v.len() - 1) as f64 * q).round() as usize])
        .collect()
}

fn neighbourhoods(spec: &ScenarioSpec, fields: &LatentFields, rng: &mut ChaCha8Rng) -> Result<(Layer, LayerSpec)> {
    let cells = partition(spec.n_neighbourhoods, &spec.bbox(), rng)?;
    let (mut features, mut attributes) = polygon_attributes(&cells, fields, 30, 15, rng);
    // urbanity classes from quintiles of the first field
    let urban: Vec<f64> = cells.iter().map(|(_, c)| fields.eval(*c)[0]).collect();
    let cuts = quantiles(&urban, &[0.2, 0.4, 0.6, 0.8]);
    for (f, u) in features.iter_mut().zip(&urban) {
        let class = cuts.iter().filter(|c| u > c).count();
        f.set_text("urbanity", URBANITY_CLASSES[class]);
    }
    attributes.push(AttributeSpec::categorical("urbanity", &URBANITY_CLASSES));
    // uninhabited cells: population 0 and the other counts left blank
    let targets: Vec<String> = attributes
        .iter()
        .skip(1)
        .take(29)
        .map(|a| a.name.clone())
        .collect();
    for f in features.iter_mut() {
        if rng.random_bool(0.03) {
            f.set_number("population", 0.0);
            for t in &targets {
                f.set_missing(t);
            }
        }
    }
    let spec = LayerSpec::Polygons {
        name: "neighbourhoods".into(),
        file: "neighbourhoods.geojson".into(),
        attributes,
        imputation: vec![ImputationRule::ZeroImplies {
            trigger: "population".into(),
            targets,
        }],
    };
    Ok((Layer::new("neighbourhoods", features), spec))
}

fn districts(spec: &ScenarioSpec, fields: &LatentFields, rng: &mut ChaCha8Rng) -> Result<(Layer, LayerSpec)> {
    let cells = partition(spec.n_districts, &spec.bbox(), rng)?;
    let (features, attributes) = polygon_attributes(&cells, fields, 10, 5, rng);
    let spec = LayerSpec::Polygons {
        name: "districts".into(),
        file: "districts.geojson".into(),
        attributes,
        imputation: vec![],
    };
    Ok((Layer::new("districts", features), spec))
}

/// Land-use classes drawn from a softmax over per-class field responses.
fn landuse(spec: &ScenarioSpec, fields: &LatentFields, rng: &mut ChaCha8Rng) -> Result<(Layer, LayerSpec)> {
    let cells = partition(spec.n_landuse, &spec.bbox(), rng)?;
    let loadings: Vec<Loading> = LANDUSE_CLASSES.iter().map(|_| Loading::new(rng, 2.0, 0.0)).collect();
    let features = cells
        .iter()
        .map(|(poly, c)| {
            let f = fields.eval(*c);
            let logits: Vec<f64> = loadings.iter().map(|l| l.linear(&f)).collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
            let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
            let mut class = w.len() - 1;
            for (k, wk) in w.iter().enumerate() {
                if u < *wk {
                    class = k;
                    break;
                }
                u -= wk;
            }
            let mut feat = Feature::new(Geometry::Polygons(vec![poly.clone()]));
            feat.set_text("class", LANDUSE_CLASSES[class]);
            feat
        })
        .collect();
    let spec = LayerSpec::Polygons {
        name: "landuse".into(),
        file: "landuse.geojson".into(),
        attributes: vec![AttributeSpec::categorical("class", &LANDUSE_CLASSES)],
        imputation: vec![],
    };
    Ok((Layer::new("landuse", features), spec))
}

/// Roads as short random walks; flows in vehicles per day, from a few
/// hundred on residential streets to ~10⁵ on motorways.
fn roads(spec: &ScenarioSpec, fields: &LatentFields, rng: &mut ChaCha8Rng) -> Result<(Layer, LayerSpec)> {
    let bbox = spec.bbox();
    let type_weights = [0.05, 0.15, 0.2, 0.25, 0.35];
    let base_flow = [60_000.0, 20_000.0, 8_000.0, 3_000.0, 600.0];
    let mut features = Vec::with_capacity(spec.n_roads);
    while features.len() < spec.n_roads {
        let mut u = rng.random::<f64>();
        let mut t = ROAD_TYPES.len() - 1;
        for (k, w) in type_weights.iter().enumerate() {
            if u < *w {
                t = k;
                break;
            }
            u -= w;
        }
        let mut p = random_point(&bbox, rng);
        let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
        let mut vertices = vec![p];
        for _ in 0..rng.random_range(2..8) {
            heading += 0.4 * gauss(rng);
            let len = rng.random_range(300.0..1500.0);
            let q = PointXY::new(p.x + len * heading.cos(), p.y + len * heading.sin());
            if !bbox.contains(&q) {
                break;
            }
            vertices.push(q);
            p = q;
        }
        if vertices.len() < 2 {
            continue;
        }
        let mid = vertices[vertices.len() / 2];
        let f = fields.eval(mid);
        let total = (base_flow[t] * (0.5 * f[0] + 0.3 * f[2] + 0.3 * gauss(rng)).exp()).round();
        let car = (total * rng.random_range(0.7..0.95)).round();
        let mut feat = Feature::new(Geometry::Lines(vec![Polyline::new(vertices)?]));
        feat.set_text("road_type", ROAD_TYPES[t]);
        feat.set_number("flow_total", total);
        feat.set_number("flow_car", car);
        feat.set_number("flow_truck", total - car);
        feat.set_number("flow_peak", (total * rng.random_range(0.08..0.15)).round());
        features.push(feat);
    }
    let spec = LayerSpec::Roads {
        name: "roads".into(),
        file: "roads.geojson".into(),
        flow_attributes: ROAD_FLOWS.iter().map(|s| s.to_string()).collect(),
        density_flow_attribute: "flow_total".into(),
        type_attribute: "road_type".into(),
        road_types: ROAD_TYPES.iter().map(|s| s.to_string()).collect(),
    };
    Ok((Layer::new("roads", features), spec))
}

/// Per-category inhomogeneous Poisson points: the intensity is held
/// constant on 100 m cells, a cell is drawn by its weight and the point is
/// uniform inside it.
fn pois(spec: &ScenarioSpec, fields: &LatentFields, rng: &mut ChaCha8Rng) -> (Layer, LayerSpec) {
    let bbox = spec.bbox();
    let cats = &POI_CATEGORIES[..spec.n_poi_categories];
    let cell = 100.0;
    let m = ((bbox.max.x - bbox.min.x) / cell).ceil() as usize;
    let centre = |k: usize| {
        PointXY::new(
            bbox.min.x + ((k % m) as f64 + 0.5) * cell,
            bbox.min.y + ((k / m) as f64 + 0.5) * cell,
        )
    };
    let grid: Vec<[f64; N_FIELDS]> = (0..m * m).map(|k| fields.eval(centre(k))).collect();
    let mut features = Vec::new();
    for cat in cats {
        let l = Loading::new(rng, 1.5, 0.0);
        let mut cum = Vec::with_capacity(grid.len());
        let mut total = 0.0;
        for f in &grid {
            total += l.linear(f).exp();
            cum.push(total);
        }
        // eating places are the most common category
        let count = if *cat == "food" { 4 * spec.poi_per_category } else { spec.poi_per_category };
        for _ in 0..count {
            let u = rng.random::<f64>() * total;
            let k = cum.partition_point(|c| *c <= u).min(cum.len() - 1);
            let c = centre(k);
            let p = PointXY::new(
                (c.x + rng.random_range(-0.5..0.5) * cell).clamp(bbox.min.x, bbox.max.x),
                (c.y + rng.random_range(-0.5..0.5) * cell).clamp(bbox.min.y, bbox.max.y),
            );
            let mut feat = Feature::new(Geometry::Point(p));
            feat.set_text("category", cat);
            features.push(feat);
        }
    }
    let spec = LayerSpec::Points {
        name: "poi".into(),
        file: "poi.geojson".into(),
        category_attribute: Some("category".into()),
        categories: cats.iter().map(|s| s.to_string()).collect(),
        exclude_within_m: 0.0,
    };
    (Layer::new("poi", features), spec)
}

fn competitors(spec: &ScenarioSpec, stations: &[StationRecord], rng: &mut ChaCha8Rng) -> (Layer, LayerSpec) {
    let bbox = spec.bbox();
    let mut features: Vec<Feature> = stations
        .iter()
        .map(|s| Feature::new(Geometry::Point(s.location)))
        .collect();
    features.extend((0..spec.n_extra_competitors).map(|_| Feature::new(Geometry::Point(random_point(&bbox, rng)))));
    let spec = LayerSpec::Points {
        name: "competitors".into(),
        file: "competitors.geojson".into(),
        category_attribute: None,
        categories: vec![],
        exclude_within_m: 50.0,
    };
    (Layer::new("competitors", features), spec)
}

/// Gridded inhabitants and jobs per cell, stored at cell centres.
fn population_grid(spec: &ScenarioSpec, fields: &LatentFields, rng: &mut ChaCha8Rng) -> (Layer, LayerSpec) {
    let bbox = spec.bbox();
    let cell = spec.raster_cell_m;
    let km2 = cell * cell / 1e6;
    let n = ((bbox.max.x - bbox.min.x) / cell).floor() as usize;
    let inh = Loading::new(rng, 1.0, 0.3);
    let jobs = Loading::new(rng, 1.0, 0.5);
    let mut features = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let p = PointXY::new(bbox.min.x + (i as f64 + 0.5) * cell, bbox.min.y + (j as f64 + 0.5) * cell);
            let f = fields.eval(p);
            let mut feat = Feature::new(Geometry::Point(p));
            feat.set_number("inhabitants", (km2 * 2500.0 * inh.draw(&f, rng).exp()).round());
            feat.set_number("jobs", (km2 * 1000.0 * jobs.draw(&f, rng).exp()).round());
            features.push(feat);
        }
    }
    let spec = LayerSpec::RasterPoints {
        name: "population_grid".into(),
        file: "population_grid.geojson".into(),
        value_attributes: vec!["inhabitants".into(), "jobs".into()],
    };
    (Layer::new("population_grid", features), spec)
}

/// Pool sites at least `min_pool_separation_m` apart, 1 km from the edge and
/// denser where the first field is high; a share of them get a second
/// station 5–30 m from the first.
fn stations(
    spec: &ScenarioSpec,
    fields: &LatentFields,
    proj: &Projection,
    origin: PointXY,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StationRecord>> {
    let b = spec.bbox();
    let urban_max = fields.bumps[0].iter().map(|(_, _, a)| a).sum::<f64>();
    let inner = BBox {
        min: PointXY::new(b.min.x + 1000.0, b.min.y + 1000.0),
        max: PointXY::new(b.max.x - 1000.0, b.max.y - 1000.0),
    };
    let mut sites: Vec<PointXY> = Vec::with_capacity(spec.n_pools);
    let mut attempts = 0usize;
    while sites.len() < spec.n_pools {
        attempts += 1;
        if attempts > 1000 * spec.n_pools {
            return Err(Error::InvalidInput(
                "scenario: cannot place pools at the requested separation".into(),
            ));
        }
        let p = random_point(&inner, rng);
        // sites favour urban areas
        if rng.random::<f64>() > 0.3 + 0.7 * (fields.eval(p)[0] / urban_max).min(1.0) {
            continue;
        }
        if sites.iter().all(|q| q.distance(&p) >= spec.min_pool_separation_m) {
            sites.push(p);
        }
    }
    let mut out = Vec::new();
    let make = |id: String, p: PointXY, rng: &mut ChaCha8Rng| {
        let (lon, lat) = proj.inverse(PointXY::new(p.x + origin.x, p.y + origin.y));
        StationRecord {
            id,
            lon,
            lat,
            location: p,
            n_connectors: rng.random_range(1..=2),
            max_power_kw: if rng.random_bool(0.7) { 11.0 } else { 22.0 },
            rollout: if rng.random_bool(0.5) {
                Rollout::Strategic
            } else {
                Rollout::DemandDriven
            },
        }
    };
    for (i, p) in sites.iter().enumerate() {
        out.push(make(format!("S{:05}", i + 1), *p, rng));
        if rng.random_bool(spec.second_station_fraction) {
            let d = rng.random_range(5.0..30.0);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let q = PointXY::new(p.x + d * a.cos(), p.y + d * a.sin());
            out.push(make(format!("S{:05}b", i + 1), q, rng));
        }
    }
    Ok(out)
}

fn shift(layer: &mut Layer, origin: PointXY) -> Result<()> {
    let mv = |p: &PointXY| PointXY::new(p.x + origin.x, p.y + origin.y);
    for f in &mut layer.features {
        f.geometry = match &f.geometry {
            Geometry::Point(p) => Geometry::Point(mv(p)),
            Geometry::Lines(ls) => Geometry::Lines(
                ls.iter()
                    .map(|l| Polyline::new(l.vertices().iter().map(mv).collect()))
                    .collect::<Result<_>>()?,
            ),
            Geometry::Polygons(ps) => Geometry::Polygons(
                ps.iter()
                    .map(|p| Polygon::new(p.exterior().iter().map(mv).collect(), vec![]))
                    .collect::<Result<_>>()?,
            ),
        };
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPredictor {
    pub predictor: String,
    /// Coefficient on the standardized predictor.
    pub coefficient: f64,
    pub mean: f64,
    pub sd: f64,
}

/// The planted ground truth of a generated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub spec: ScenarioSpec,
    pub n_pools: usize,
    pub n_stations: usize,
    pub n_raw_predictors: usize,
    pub n_processed_predictors: usize,
    pub planted: Vec<PlantedPredictor>,
    pub signal_sd: f64,
    pub noise_sd: f64,
    /// AUC of the noise-free signal against the labels.
    pub oracle_auc: f64,
    pub n_transactions: usize,
}

/// Per-pool planted quantities, in pool-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Planting {
    pub pool_ids: Vec<String>,
    pub signal: Vec<f64>,
    pub latent: Vec<f64>,
    /// P(label = 1 | signal) under the planted noise.
    pub oracle_score: Vec<f64>,
    pub popularity: Vec<u32>,
    pub labels: Vec<u8>,
    pub planted: Vec<PlantedPredictor>,
    pub signal_sd: f64,
    pub noise_sd: f64,
    pub oracle_auc: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    c / (sa * sb)
}

/// Greedy pick of `s` weakly correlated, mostly non-zero columns; the food
/// POI density, when present and not too sparse, goes first with a positive
/// sign.
fn choose_planted(x: &FeatureMatrix, spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Result<Vec<PlantedTerm>> {
    let cols: Vec<Vec<f64>> = (0..x.n_cols()).map(|j| x.column(j).to_vec()).collect();
    let names = x.column_names();
    let n = x.n_rows() as f64;
    let mut candidates: Vec<usize> = (0..cols.len())
        .filter(|&j| {
            let zeros = cols[j].iter().filter(|v| **v == 0.0).count() as f64 / n;
            zeros < 0.5 || (names[j] == "poi.density=food" && zeros < 0.8)
        })
        .collect();
    if candidates.len() < spec.sparsity {
        return Err(Error::InvalidInput(format!(
            "scenario: {} usable predictors, {} requested",
            candidates.len(),
            spec.sparsity
        )));
    }
    let perm = sample(rng, candidates.len(), candidates.len()).into_vec();
    candidates = perm.into_iter().map(|k| candidates[k]).collect();
    if let Some(pos) = candidates.iter().position(|&j| names[j] == "poi.density=food") {
        let j = candidates.remove(pos);
        candidates.insert(0, j);
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut limit = 0.5;
    while chosen.len() < spec.sparsity {
        for &j in &candidates {
            if chosen.len() == spec.sparsity {
                break;
            }
            if !chosen.contains(&j) && chosen.iter().all(|&k| correlation(&cols[j], &cols[k]).abs() < limit) {
                chosen.push(j);
            }
        }
        limit += 0.1;
    }
    Ok(chosen
        .into_iter()
        .map(|j| {
            let sign = if names[j] == "poi.density=food" || rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            };
            PlantedTerm {
                predictor: names[j].clone(),
                coefficient: sign * spec.coefficient_scale * rng.random_range(0.75..1.25),
            }
        })
        .collect())
}

fn top_labels(values: &[f64], ids: &[String], z: f64) -> Result<Vec<u8>> {
    Ok(label_top(values, ids, z)?.y)
}

/// Planted signal, noisy latent ranking, labels and integer popularity for
/// the pools of `x`.
pub fn plant_popularity(spec: &ScenarioSpec, x: &FeatureMatrix) -> Result<Planting> {
    let mut rng = stream(spec.seed, Purpose::Synth, 10);
    let terms = match &spec.planted {
        Some(t) => t.clone(),
        None => choose_planted(x, spec, &mut rng)?,
    };
    let n = x.n_rows();
    let ids = x.row_ids().to_vec();
    let mut signal = vec![0.0; n];
    let mut planted = Vec::new();
    for t in &terms {
        let j = x
            .column_index(&t.predictor)
            .ok_or_else(|| Error::InvalidInput(format!("scenario: no predictor `{}`", t.predictor)))?;
        let col = x.column(j).to_vec();
        let (m, sd) = mean_sd(&col);
        if sd > 0.0 {
            for (s, v) in signal.iter_mut().zip(&col) {
                *s += t.coefficient * (v - m) / sd;
            }
        }
        planted.push(PlantedPredictor {
            predictor: t.predictor.clone(),
            coefficient: t.coefficient,
            mean: m,
            sd,
        });
    }
    let (_, signal_sd) = mean_sd(&signal);
    let eps: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
    let latent_at = |sigma: f64| -> Vec<f64> { signal.iter().zip(&eps).map(|(s, e)| s + sigma * e).collect() };
    let auc_at = |sigma: f64| -> Result<f64> { auc(&top_labels(&latent_at(sigma), &ids, spec.top_fraction)?, &signal) };
    let noise_sd = if signal_sd == 0.0 {
        1.0
    } else {
        match spec.noise {
            NoiseSpec::Relative(r) => r * signal_sd,
            NoiseSpec::TargetOracleAuc(target) if target >= 1.0 => 0.0,
            NoiseSpec::TargetOracleAuc(target) => {
                let (mut lo, mut hi) = (0.0, 20.0 * signal_sd);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if auc_at(mid)? > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    };
    let latent = latent_at(noise_sd);
    let labels = top_labels(&latent, &ids, spec.top_fraction)?;
    let oracle_auc = if labels.iter().all(|&v| v == labels[0]) {
        f64::NAN
    } else {
        auc(&labels, &signal)?
    };
    // threshold between the lowest positive and highest negative latent value
    let lo_pos = latent
        .iter()
        .zip(&labels)
        .filter(|(_, &y)| y == 1)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    let hi_neg = latent
        .iter()
        .zip(&labels)
        .filter(|(_, &y)| y == 0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = 0.5 * (lo_pos + hi_neg);
    let oracle_score = signal
        .iter()
        .map(|&s| {
            if noise_sd == 0.0 {
                if s > cut {
                    1.0
                } else {
                    0.0
                }
            } else {
                NormalDist::new(0.0, 1.0).expect("unit normal").cdf((s - cut) / noise_sd)
            }
        })
        .collect();
    // popularity rises with latent rank; every positive outranks every negative
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then_with(|| ids[b].cmp(&ids[a])));
    let mut popularity = vec![0u32; n];
    for (rank, &i) in order.iter().enumerate() {
        popularity[i] = 1 + (40 * rank / n) as u32 + 10 * labels[i] as u32;
    }
    Ok(Planting {
        pool_ids: ids,
        signal,
        latent,
        oracle_score,
        popularity,
        labels,
        planted,
        signal_sd,
        noise_sd,
        oracle_auc,
    })
}

/// Sessions realizing each pool's popularity as distinct RFID counts, plus
/// records the filters must discard (outside 2015, inconsistent, unknown
/// station).
fn transactions(
    spec: &ScenarioSpec,
    pools: &[PoolRecord],
    stations: &[StationRecord],
    popularity: &[u32],
) -> Result<Vec<Transaction>> {
    let mut rng = stream(spec.seed, Purpose::Synth, 11);
    let power = |id: &str| stations.iter().find(|s| s.id == id).map_or(11.0, |s| s.max_power_kw);
    let year = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
    let max_rfid = popularity.iter().copied().max().unwrap_or(0) as usize;
    if max_rfid > spec.n_rfids {
        return Err(Error::InvalidInput(format!(
            "scenario: {} RFIDs cannot realize a popularity of {max_rfid}",
            spec.n_rfids
        )));
    }
    let mut out = Vec::new();
    for (pool, &pop) in pools.iter().zip(popularity) {
        let powers: Vec<f64> = pool.station_ids.iter().map(|s| power(s)).collect();
        for r in sample(&mut rng, spec.n_rfids, pop as usize).into_iter() {
            for _ in 0..rng.random_range(1..=3) {
                let k = rng.random_range(0..pool.station_ids.len());
                let start = year + Duration::minutes(rng.random_range(0..364 * 24 * 60));
                let conn_min = rng.random_range(30..12 * 60);
                let charging_h = conn_min as f64 / 60.0 * rng.random_range(0.3..1.0);
                out.push(Transaction {
                    station_id: pool.station_ids[k].clone(),
                    rfid: format!("R{r:06}"),
                    plug_in: start,
                    plug_out: start + Duration::minutes(conn_min),
                    energy_kwh: round_to(charging_h * powers[k] * rng.random_range(0.5..0.9), 3),
                    charging_time_h: round_to(charging_h, 4),
                });
            }
        }
    }
    let n_valid = out.len();
    for i in 0..(n_valid / 50).max(3) {
        let pool = &pools[rng.random_range(0..pools.len())];
        let station = pool.station_ids[0].clone();
        let rfid = format!("R{:06}", rng.random_range(0..spec.n_rfids));
        let t = match i % 3 {
            0 => {
                // straddles new year 2015/2016
                let start = Utc.with_ymd_and_hms(2015, 12, 31, 20, 0, 0).unwrap();
                Transaction {
                    station_id: station,
                    rfid,
                    plug_in: start,
                    plug_out: start + Duration::hours(8),
                    energy_kwh: 10.0,
                    charging_time_h: 3.0,
                }
            }
            1 => {
                let start = year + Duration::hours(rng.random_range(0..8000));
                Transaction {
                    station_id: station,
                    rfid,
                    plug_in: start,
                    plug_out: start + Duration::hours(1),
                    energy_kwh: 5.0,
                    charging_time_h: 2.0,
                }
            }
            _ => {
                let start = year + Duration::hours(rng.random_range(0..8000));
                Transaction {
                    station_id: format!("X{i:05}"),
                    rfid,
                    plug_in: start,
                    plug_out: start + Duration::hours(2),
                    energy_kwh: 5.0,
                    charging_time_h: 1.0,
                }
            }
        };
        out.push(t);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub const SCENARIO_CONFIG: &str = "config.json";

/// Writes a complete scenario into `dir`: layers and `attributes.json`,
/// `stations.csv`, `transactions.csv`, a `config.json` pointing at them,
/// `oracle.csv` with per-pool planted quantities and `planted.json`.
pub fn generate(spec: &ScenarioSpec, dir: &Path) -> Result<ScenarioTruth> {
    spec.validate()?;
    fs::create_dir_all(dir)?;
    let (proj, origin) = spec.projection();
    let mut rng = stream(spec.seed, Purpose::Synth, 0);
    let fields = LatentFields::new(&spec.bbox(), &mut rng);

    let stations = stations(spec, &fields, &proj, origin, &mut stream(spec.seed, Purpose::Synth, 1))?;
    let mut built = vec![
        neighbourhoods(spec, &fields, &mut stream(spec.seed, Purpose::Synth, 2))?,
        districts(spec, &fields, &mut stream(spec.seed, Purpose::Synth, 3))?,
        landuse(spec, &fields, &mut stream(spec.seed, Purpose::Synth, 4))?,
        roads(spec, &fields, &mut stream(spec.seed, Purpose::Synth, 5))?,
    ];
    built.push(pois(spec, &fields, &mut stream(spec.seed, Purpose::Synth, 6)));
    built.push(competitors(spec, &stations, &mut stream(spec.seed, Purpose::Synth, 7)));
    built.push(population_grid(spec, &fields, &mut stream(spec.seed, Purpose::Synth, 8)));

    let mut layer_specs = Vec::new();
    for (mut layer, ls) in built {
        shift(&mut layer, origin)?;
        write_geojson(&dir.join(ls.file()), &layer, &proj)?;
        layer_specs.push(ls);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        layers: layer_specs,
    };
    manifest.write(&dir.join("attributes.json"))?;
    write_stations(&dir.join("stations.csv"), &stations)?;

    let mut cfg = RunConfig {
        reference_latitude: Some(spec.center_lat),
        seed: spec.seed,
        ..RunConfig::default()
    };
    cfg.labeling.top_fraction = spec.top_fraction;
    write_json(&dir.join(SCENARIO_CONFIG), &cfg)?;

    // extraction exactly as the pipeline will do it
    let mut resolved = cfg.clone();
    resolved.resolve_paths(dir);
    let (station_records, proj_read) = crate::pipeline::load_stations(&resolved)?;
    let pools = aggregate_pools(&station_records, resolved.pool_merge_distance_m)?;
    let (raw, processed, _) = build_features(&resolved, &pools, &proj_read, &resolved.buffer)?;
    let planting = plant_popularity(spec, &processed)?;
    if planting.pool_ids.iter().zip(&pools).any(|(a, p)| *a != p.pool_id) {
        return Err(Error::InvalidInput("scenario: pool order changed during extraction".into()));
    }

    let txs = transactions(spec, &pools, &station_records, &planting.popularity)?;
    write_transactions(&dir.join("transactions.csv"), &txs)?;

    let mut w = csv::Writer::from_path(dir.join("oracle.csv"))?;
    w.write_record(["pool_id", "signal", "latent", "oracle_score", "popularity", "label"])?;
    for i in 0..pools.len() {
        w.write_record([
            planting.pool_ids[i].clone(),
            planting.signal[i].to_string(),
            planting.latent[i].to_string(),
            planting.oracle_score[i].to_string(),
            planting.popularity[i].to_string(),
            planting.labels[i].to_string(),
        ])?;
    }
    w.flush()?;

    let truth = ScenarioTruth {
        spec: spec.clone(),
        n_pools: pools.len(),
        n_stations: station_records.len(),
        n_raw_predictors: raw.n_cols(),
        n_processed_predictors: processed.n_cols(),
        planted: planting.planted,
        signal_sd: planting.signal_sd,
        noise_sd: planting.noise_sd,
        oracle_auc: planting.oracle_auc,
        n_transactions: txs.len(),
    };
    write_json(&dir.join("planted.json"), &truth)?;
    Ok(truth)
}

/// Signal column of `oracle.csv`, keyed by pool id.
pub fn read_oracle(dir: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let path = dir.join("oracle.csv");
    let mut r = csv::Reader::from_path(&path)?;
    let mut ids = Vec::new();
    let mut signal = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        signal.push(
            rec[1]
                .parse::<f64>()
                .map_err(|_| Error::schema(path.display().to_string(), "bad signal value"))?,
        );
    }
    Ok((ids, signal))
}

pub fn read_truth(dir: &Path) -> Result<ScenarioTruth> {
    let path = dir.join("planted.json");
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
}
