//! Intersection area of simple polygons by boundary integration.
//!
//! The boundary of `A ∩ B` is made of the pieces of `∂A` lying inside `B`
//! and the pieces of `∂B` lying inside `A`. Summing `½ (p × q)` over those
//! oriented pieces gives the area without building the clipped polygon, and
//! works for non-convex polygons with holes. Edges shared by both boundaries
//! are counted once when both regions lie on the same side and dropped
//! otherwise.

use super::{ring_signed_area, PointXY, Polygon, Polyline};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Location {
    Inside,
    Outside,
    /// On the boundary; the flag tells whether the boundary edge runs in the
    /// same direction as the probing edge.
    Boundary { same_direction: bool },
}

/// Even-odd point-in-polygon over all rings. Boundary points may go either way.
pub fn point_in_polygon(poly: &Polygon, p: PointXY) -> bool {
    if !poly.bbox().contains(&p) {
        return false;
    }
    let mut inside = false;
    for ring in poly.rings() {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (ring[i], ring[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
    }
    inside
}

fn tolerance(a: &Polygon, b: &Polygon) -> f64 {
    1e-9 * (1.0 + a.bbox().union(b.bbox()).diagonal())
}

fn locate(poly: &Polygon, p: PointXY, dir: PointXY, tol: f64) -> Location {
    for ring in poly.rings() {
        let n = ring.len();
        for i in 0..n {
            let (q0, q1) = (ring[i], ring[(i + 1) % n]);
            if super::point_segment_distance(p, q0, q1) <= tol {
                return Location::Boundary {
                    same_direction: dir.dot(q1.sub(q0)) > 0.0,
                };
            }
        }
    }
    if point_in_polygon(poly, p) {
        Location::Inside
    } else {
        Location::Outside
    }
}

/// Parameters in (0, 1) where segment `p0→p1` meets the boundary of `other`.
fn split_parameters(p0: PointXY, p1: PointXY, other: &Polygon, tol: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    out.push(1.0);
    let d = p1.sub(p0);
    let dlen = d.dot(d).sqrt();
    if dlen == 0.0 {
        return;
    }
    let seg_box_min = PointXY::new(p0.x.min(p1.x) - tol, p0.y.min(p1.y) - tol);
    let seg_box_max = PointXY::new(p0.x.max(p1.x) + tol, p0.y.max(p1.y) + tol);
    for ring in other.rings() {
        let n = ring.len();
        for i in 0..n {
            let (q0, q1) = (ring[i], ring[(i + 1) % n]);
            if q0.x.max(q1.x) < seg_box_min.x
                || q0.x.min(q1.x) > seg_box_max.x
                || q0.y.max(q1.y) < seg_box_min.y
                || q0.y.min(q1.y) > seg_box_max.y
            {
                continue;
            }
            let e = q1.sub(q0);
            let elen = e.dot(e).sqrt();
            let denom = d.cross(e);
            let w = q0.sub(p0);
            if denom.abs() > 1e-12 * dlen * elen {
                let t = w.cross(e) / denom;
                let u = w.cross(d) / denom;
                let ut = tol / elen;
                if t > 0.0 && t < 1.0 && u >= -ut && u <= 1.0 + ut {
                    out.push(t);
                }
            } else if (w.cross(d) / dlen).abs() <= tol {
                // collinear: the overlap endpoints split the edge
                for q in [q0, q1] {
                    let t = q.sub(p0).dot(d) / (dlen * dlen);
                    if t > 0.0 && t < 1.0 {
                        out.push(t);
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup_by(|a, b| (*a - *b).abs() * dlen <= tol);
    // dedup may have removed the final 1.0 in favour of a close neighbour
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
}

/// Contribution of the pieces of `a`'s boundary inside `b`, as twice the
/// signed area relative to `origin`. Rings that never touch `b`'s boundary
/// are accumulated separately in `whole_rings` (exact ring areas).
fn boundary_pieces(
    a: &Polygon,
    b: &Polygon,
    keep_shared: bool,
    origin: PointXY,
    tol: f64,
    whole_rings: &mut f64,
) -> f64 {
    let mut twice_area = 0.0;
    let mut params = Vec::with_capacity(8);
    for ring in a.rings() {
        let n = ring.len();
        let mut ring_sum = 0.0;
        let mut split = false;
        let mut first_loc = None;
        for i in 0..n {
            let (p0, p1) = (ring[i], ring[(i + 1) % n]);
            split_parameters(p0, p1, b, tol, &mut params);
            if params.len() > 2 {
                split = true;
            }
            let d = p1.sub(p0);
            for w in params.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                let mid = p0.lerp(p1, 0.5 * (t0 + t1));
                let loc = locate(b, mid, d, tol);
                if first_loc.is_none() {
                    first_loc = Some(loc);
                }
                if matches!(loc, Location::Boundary { .. }) {
                    split = true;
                }
                let keep = match loc {
                    Location::Inside => true,
                    Location::Outside => false,
                    Location::Boundary { same_direction } => keep_shared && same_direction,
                };
                if keep {
                    let s0 = p0.lerp(p1, t0).sub(origin);
                    let s1 = p0.lerp(p1, t1).sub(origin);
                    ring_sum += s0.cross(s1);
                }
            }
        }
        if split {
            twice_area += ring_sum;
        } else if first_loc == Some(Location::Inside) {
            *whole_rings += ring_signed_area(ring);
        }
    }
    twice_area
}

/// Area of `a ∩ b` in square meters. Zero for disjoint inputs.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    if !a.bbox().intersects(b.bbox()) {
        return 0.0;
    }
    let tol = tolerance(a, b);
    let origin = a.bbox().min;
    let mut whole = 0.0;
    let twice = boundary_pieces(a, b, true, origin, tol, &mut whole)
        + boundary_pieces(b, a, false, origin, tol, &mut whole);
    let area = whole + 0.5 * twice;
    let cap = a.area().min(b.area());
    area.clamp(0.0, cap)
}

/// Total length of `line` inside `region` (boundary-hugging pieces count as inside).
pub fn polyline_length_within(line: &Polyline, region: &Polygon) -> f64 {
    if !line.bbox().intersects(region.bbox()) {
        return 0.0;
    }
    let tol = 1e-9 * (1.0 + line.bbox().union(region.bbox()).diagonal());
    let mut params = Vec::with_capacity(8);
    let mut total = 0.0;
    for (p0, p1) in line.segments() {
        split_parameters(p0, p1, region, tol, &mut params);
        let len = p0.distance(&p1);
        let d = p1.sub(p0);
        for w in params.windows(2) {
            let mid = p0.lerp(p1, 0.5 * (w[0] + w[1]));
            if locate(region, mid, d, tol) != Location::Outside {
                total += (w[1] - w[0]) * len;
            }
        }
    }
    total
}
