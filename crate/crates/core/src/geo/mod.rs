//! Planar geometry primitives for buffer-based predictor extraction.
//!
//! All coordinates are projected planar meters. Polygon rings are stored open
//! (the closing vertex is not repeated); exteriors are counter-clockwise and
//! holes clockwise, so the interior always lies to the left of every edge.

mod clip;
pub mod layer;

pub use clip::{intersection_area, point_in_polygon, polyline_length_within};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Polygons below this area are treated as degenerate.
pub const MIN_POLYGON_AREA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointXY {
    pub x: f64,
    pub y: f64,
}

impl PointXY {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &PointXY) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub(crate) fn sub(self, o: PointXY) -> PointXY {
        PointXY::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub(crate) fn cross(self, o: PointXY) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub(crate) fn dot(self, o: PointXY) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub(crate) fn lerp(self, o: PointXY, t: f64) -> PointXY {
        PointXY::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: PointXY,
    pub max: PointXY,
}

impl BBox {
    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a PointXY>) -> Option<BBox> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        let mut b = BBox {
            min: first,
            max: first,
        };
        for p in it {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            min: PointXY::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: PointXY::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn center(&self) -> PointXY {
        PointXY::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(&self.max)
    }

    pub fn contains(&self, p: &PointXY) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// A simple polygon with optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<PointXY>,
    holes: Vec<Vec<PointXY>>,
    bbox: BBox,
}

/// Signed shoelace area of an open ring, evaluated relative to its first vertex.
pub(crate) fn ring_signed_area(ring: &[PointXY]) -> f64 {
    let o = ring[0];
    let mut s = 0.0;
    for i in 1..ring.len().saturating_sub(1) {
        s += ring[i].sub(o).cross(ring[i + 1].sub(o));
    }
    0.5 * s
}

fn normalize_ring(mut ring: Vec<PointXY>) -> Result<Vec<PointXY>> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::Geometry("non-finite coordinate".into()));
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::Geometry(format!(
            "ring has {} distinct vertices, need at least 3",
            ring.len()
        )));
    }
    Ok(ring)
}

fn segments_cross(a0: PointXY, a1: PointXY, b0: PointXY, b1: PointXY) -> bool {
    let d1 = a1.sub(a0).cross(b0.sub(a0));
    let d2 = a1.sub(a0).cross(b1.sub(a0));
    let d3 = b1.sub(b0).cross(a0.sub(b0));
    let d4 = b1.sub(b0).cross(a1.sub(b0));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    // collinear overlap of non-adjacent edges also breaks simplicity
    let on = |p: PointXY, q0: PointXY, q1: PointXY, d: f64| {
        d == 0.0 && p.x >= q0.x.min(q1.x) && p.x <= q0.x.max(q1.x) && p.y >= q0.y.min(q1.y) && p.y <= q0.y.max(q1.y)
    };
    on(b0, a0, a1, d1) || on(b1, a0, a1, d2) || on(a0, b0, b1, d3) || on(a1, b0, b1, d4)
}

fn ring_is_simple(ring: &[PointXY]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a0, a1) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // skip adjacent edges, which share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (b0, b1) = (ring[j], ring[(j + 1) % n]);
            if segments_cross(a0, a1, b0, b1) {
                return false;
            }
        }
    }
    true
}

impl Polygon {
    /// Builds a validated polygon. Ring orientation is normalized; closing
    /// vertices and consecutive duplicates are removed.
    pub fn new(exterior: Vec<PointXY>, holes: Vec<Vec<PointXY>>) -> Result<Polygon> {
        let mut exterior = normalize_ring(exterior)?;
        if !ring_is_simple(&exterior) {
            return Err(Error::Geometry("self-intersecting exterior ring".into()));
        }
        if ring_signed_area(&exterior) < 0.0 {
            exterior.reverse();
        }
        let bbox = BBox::of_points(&exterior).expect("non-empty ring");
        let mut out_holes = Vec::with_capacity(holes.len());
        for h in holes {
            let mut h = normalize_ring(h)?;
            if !ring_is_simple(&h) {
                return Err(Error::Geometry("self-intersecting hole ring".into()));
            }
            if ring_signed_area(&h) > 0.0 {
                h.reverse();
            }
            let outer = Polygon {
                exterior: exterior.clone(),
                holes: vec![],
                bbox,
            };
            if !h.iter().all(|p| point_in_polygon(&outer, *p)) {
                return Err(Error::Geometry("hole not inside exterior ring".into()));
            }
            out_holes.push(h);
        }
        let poly = Polygon {
            exterior,
            holes: out_holes,
            bbox,
        };
        let area = poly.area();
        if !(area >= MIN_POLYGON_AREA) {
            return Err(Error::Geometry(format!("degenerate polygon with area {area:e} m²")));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle, mostly for tests and scenario bounds.
    pub fn rect(min: PointXY, max: PointXY) -> Result<Polygon> {
        Polygon::new(
            vec![min, PointXY::new(max.x, min.y), max, PointXY::new(min.x, max.y)],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[PointXY] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<PointXY>] {
        &self.holes
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    /// All rings, exterior first.
    pub fn rings(&self) -> impl Iterator<Item = &[PointXY]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    /// Shoelace area of the exterior minus the holes.
    pub fn area(&self) -> f64 {
        self.rings().map(ring_signed_area).sum()
    }

    pub fn centroid(&self) -> PointXY {
        let o = self.exterior[0];
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for ring in self.rings() {
            let n = ring.len();
            for i in 0..n {
                let p = ring[i].sub(o);
                let q = ring[(i + 1) % n].sub(o);
                let c = p.cross(q);
                a2 += c;
                cx += (p.x + q.x) * c;
                cy += (p.y + q.y) * c;
            }
        }
        PointXY::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
    }
}

pub fn polygon_area(p: &Polygon) -> f64 {
    p.area()
}

/// An open chain of at least two vertices with positive length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    vertices: Vec<PointXY>,
    bbox: BBox,
}

impl Polyline {
    pub fn new(mut vertices: Vec<PointXY>) -> Result<Polyline> {
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Geometry("non-finite polyline vertex".into()));
        }
        vertices.dedup();
        if vertices.len() < 2 {
            return Err(Error::Geometry("polyline needs at least 2 distinct vertices".into()));
        }
        let bbox = BBox::of_points(&vertices).expect("non-empty");
        Ok(Polyline { vertices, bbox })
    }

    pub fn vertices(&self) -> &[PointXY] {
        &self.vertices
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn segments(&self) -> impl Iterator<Item = (PointXY, PointXY)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(&b)).sum()
    }

    pub fn distance_to(&self, p: PointXY) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: PointXY, a: PointXY, b: PointXY) -> f64 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (p.sub(a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(&a.lerp(b, t))
}

/// Circle approximation parameters for pool buffers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferSpec {
    pub radius: f64,
    pub n_segments: usize,
}

/// Radii considered when selecting the buffer size.
pub const CANDIDATE_RADII: [f64; 9] = [100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0];

impl Default for BufferSpec {
    fn default() -> Self {
        Self {
            radius: 350.0,
            n_segments: 64,
        }
    }
}

impl BufferSpec {
    pub fn new(radius: f64, n_segments: usize) -> Result<Self> {
        let s = Self { radius, n_segments };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidInput(format!("buffer radius must be positive, got {}", self.radius)));
        }
        if self.n_segments < 16 {
            return Err(Error::InvalidInput(format!(
                "buffer needs at least 16 segments, got {}",
                self.n_segments
            )));
        }
        Ok(())
    }

    /// Circumradius of the regular polygon whose area equals the circle's.
    pub fn corrected_radius(&self) -> f64 {
        let n = self.n_segments as f64;
        let k = (2.0 * std::f64::consts::PI / (n * (2.0 * std::f64::consts::PI / n).sin())).sqrt();
        self.radius * k
    }

    pub fn nominal_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }
}

/// Regular `n_segments`-gon centred on `center` with area πr².
pub fn make_buffer(center: PointXY, spec: &BufferSpec) -> Polygon {
    let r = spec.corrected_radius();
    let n = spec.n_segments;
    let ring: Vec<PointXY> = (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            PointXY::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    let bbox = BBox::of_points(&ring).expect("non-empty");
    Polygon {
        exterior: ring,
        holes: vec![],
        bbox,
    }
}

pub fn nearest_point_distance(from: PointXY, targets: &[PointXY]) -> Result<f64> {
    targets
        .iter()
        .map(|t| from.distance(t))
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidInput("nearest distance over an empty target set".into()))
}

/// Index and distance of the closest polyline. Ties keep the lowest index.
pub fn nearest_polyline(from: PointXY, targets: &[Polyline]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in targets.iter().enumerate() {
        let d = l.distance_to(from);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("nearest distance over an empty target set".into()))
}

/// Equirectangular projection about a fixed reference latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub ref_lat: f64,
}

impl Projection {
    pub fn new(ref_lat: f64) -> Self {
        Self { ref_lat }
    }

    pub fn forward(&self, lon: f64, lat: f64) -> PointXY {
        project_lonlat(lon, lat, self.ref_lat)
    }

    pub fn inverse(&self, p: PointXY) -> (f64, f64) {
        let lat = (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = (p.x / (EARTH_RADIUS_M * self.ref_lat.to_radians().cos())).to_degrees();
        (lon, lat)
    }
}

pub fn project_lonlat(lon: f64, lat: f64, ref_lat: f64) -> PointXY {
    PointXY::new(
        EARTH_RADIUS_M * lon.to_radians() * ref_lat.to_radians().cos(),
        EARTH_RADIUS_M * lat.to_radians(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sq(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rect(PointXY::new(x0, y0), PointXY::new(x1, y1)).unwrap()
    }

    #[test]
    fn unit_square_area_and_hole() {
        assert_eq!(sq(0.0, 0.0, 1.0, 1.0).area(), 1.0);
        let holed = Polygon::new(
            sq(0.0, 0.0, 1.0, 1.0).exterior().to_vec(),
            vec![sq(0.25, 0.25, 0.75, 0.75).exterior().to_vec()],
        )
        .unwrap();
        assert_relative_eq!(holed.area(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn orientation_is_normalized() {
        let cw = vec![
            PointXY::new(0.0, 0.0),
            PointXY::new(0.0, 2.0),
            PointXY::new(2.0, 2.0),
            PointXY::new(2.0, 0.0),
            PointXY::new(0.0, 0.0),
        ];
        let p = Polygon::new(cw, vec![]).unwrap();
        assert_eq!(p.exterior().len(), 4);
        assert!(ring_signed_area(p.exterior()) > 0.0);
        assert_eq!(p.area(), 4.0);
    }

    #[test]
    fn rejects_degenerate_and_self_intersecting() {
        let line = vec![PointXY::new(0.0, 0.0), PointXY::new(1.0, 1.0), PointXY::new(2.0, 2.0)];
        assert!(Polygon::new(line, vec![]).is_err());
        let bowtie = vec![
            PointXY::new(0.0, 0.0),
            PointXY::new(1.0, 1.0),
            PointXY::new(1.0, 0.0),
            PointXY::new(0.0, 1.0),
        ];
        assert!(Polygon::new(bowtie, vec![]).is_err());
        assert!(Polygon::new(vec![PointXY::new(0.0, 0.0), PointXY::new(1.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn triangle_area_matches_cross_product() {
        let (a, b, c) = (PointXY::new(1.0, 2.0), PointXY::new(7.5, -1.0), PointXY::new(3.0, 9.0));
        let t = Polygon::new(vec![a, b, c], vec![]).unwrap();
        let direct = 0.5 * b.sub(a).cross(c.sub(a)).abs();
        assert_relative_eq!(t.area(), direct, max_relative = 1e-14);
    }

    #[test]
    fn buffer_area_is_corrected() {
        let spec = BufferSpec::new(350.0, 64).unwrap();
        let b = make_buffer(PointXY::new(0.0, 0.0), &spec);
        let target = std::f64::consts::PI * 350.0 * 350.0;
        assert!((b.area() - target).abs() / target < 1e-3);
        assert_relative_eq!(target, 384_845.1, max_relative = 1e-6);
        for n in [16, 17, 32, 100, 360] {
            let b = make_buffer(PointXY::new(5.0, -3.0), &BufferSpec::new(100.0, n).unwrap());
            assert!((b.area() - spec_area(100.0)).abs() / spec_area(100.0) < 1e-3, "n = {n}");
        }
        assert_eq!(BufferSpec::default().radius, 350.0);
        assert!(BufferSpec::new(350.0, 8).is_err());
        assert!(BufferSpec::new(-1.0, 64).is_err());
    }

    fn spec_area(r: f64) -> f64 {
        std::f64::consts::PI * r * r
    }

    #[test]
    fn nearest_distances() {
        assert_eq!(nearest_point_distance(PointXY::new(0.0, 0.0), &[PointXY::new(3.0, 4.0)]).unwrap(), 5.0);
        assert_eq!(nearest_point_distance(PointXY::new(3.0, 4.0), &[PointXY::new(3.0, 4.0)]).unwrap(), 0.0);
        assert!(nearest_point_distance(PointXY::new(0.0, 0.0), &[]).is_err());
        let seg = Polyline::new(vec![PointXY::new(-1.0, 0.0), PointXY::new(1.0, 0.0)]).unwrap();
        let (i, d) = nearest_polyline(PointXY::new(0.0, 1.0), std::slice::from_ref(&seg)).unwrap();
        assert_eq!((i, d), (0, 1.0));
        assert!(nearest_polyline(PointXY::new(0.0, 1.0), &[]).is_err());
        // beyond the endpoint the distance is to the endpoint
        assert_relative_eq!(seg.distance_to(PointXY::new(4.0, 4.0)), 5.0);
    }

    #[test]
    fn projection_scales() {
        let o = project_lonlat(0.0, 0.0, 0.0);
        assert_eq!((o.x, o.y), (0.0, 0.0));
        let dy = project_lonlat(5.0, 53.0, 52.0).y - project_lonlat(5.0, 52.0, 52.0).y;
        assert_relative_eq!(dy, 111_194.9, max_relative = 1e-6);
        let dx = project_lonlat(6.0, 52.0, 52.0).x - project_lonlat(5.0, 52.0, 52.0).x;
        // R·cos(52°)·π/180 = 68 458.43 m
        assert!((dx - 68_458.43).abs() < 0.01, "{dx}");
        assert!((dx - 68_455.0).abs() / 68_455.0 < 1e-4);
        let proj = Projection::new(52.1);
        let (lon, lat) = proj.inverse(proj.forward(5.3, 51.9));
        assert_relative_eq!(lon, 5.3, max_relative = 1e-12);
        assert_relative_eq!(lat, 51.9, max_relative = 1e-12);
    }
}
