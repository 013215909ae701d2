use evsite_core::geo::{
    intersection_area, make_buffer, point_in_polygon, polygon_area, polyline_length_within, BufferSpec, PointXY,
    Polygon, Polyline,
};
use proptest::prelude::*;

/// Star-shaped (hence simple, possibly non-convex) polygon around `c`.
fn star(c: (f64, f64), radii: &[f64], phase: f64) -> Polygon {
    let n = radii.len();
    let ring = radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = phase + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            PointXY::new(c.0 + r * a.cos(), c.1 + r * a.sin())
        })
        .collect();
    Polygon::new(ring, vec![]).unwrap()
}

fn star_strategy() -> impl Strategy<Value = Polygon> {
    ((-50.0..50.0f64, -50.0..50.0f64), prop::collection::vec(10.0..80.0f64, 3..14), 0.0..6.28f64)
        .prop_map(|(c, r, ph)| star(c, &r, ph))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #[test]
    fn intersection_is_symmetric_and_bounded(a in star_strategy(), b in star_strategy()) {
        let ab = intersection_area(&a, &b);
        let ba = intersection_area(&b, &a);
        prop_assert!(rel_close(ab, ba, 1e-9) || (ab - ba).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= polygon_area(&a).min(polygon_area(&b)) * (1.0 + 1e-9));
    }

    #[test]
    fn self_intersection_is_the_area(a in star_strategy()) {
        prop_assert!(rel_close(intersection_area(&a, &a), polygon_area(&a), 1e-9));
    }

    #[test]
    fn nested_buffers_give_inner_area(
        cx in -1e4..1e4f64, cy in -1e4..1e4f64,
        r1 in 10.0..200.0f64, extra in 20.0..400.0f64, n in 16usize..128,
    ) {
        let inner = make_buffer(PointXY::new(cx, cy), &BufferSpec::new(r1, n).unwrap());
        let outer = make_buffer(PointXY::new(cx, cy), &BufferSpec::new(r1 + extra, n).unwrap());
        prop_assert!(rel_close(intersection_area(&inner, &outer), polygon_area(&inner), 1e-9));
    }

    #[test]
    fn buffer_area_matches_circle(r in 1.0..5000.0f64, n in 16usize..256) {
        let spec = BufferSpec::new(r, n).unwrap();
        let b = make_buffer(PointXY::new(0.0, 0.0), &spec);
        prop_assert!(rel_close(polygon_area(&b), std::f64::consts::PI * r * r, 1e-3));
    }

    #[test]
    fn clipped_length_never_exceeds_total(
        pts in prop::collection::vec((-150.0..150.0f64, -150.0..150.0f64), 2..8),
        region in star_strategy(),
    ) {
        let line = Polyline::new(pts.iter().map(|&(x, y)| PointXY::new(x, y)).collect());
        prop_assume!(line.is_ok());
        let line = line.unwrap();
        let inside = polyline_length_within(&line, &region);
        prop_assert!(inside >= 0.0);
        prop_assert!(inside <= line.length() * (1.0 + 1e-12));
    }
}

/// Fraction of a regular sample grid over `a`'s bounding box lying in both
/// polygons, scaled to area.
fn grid_estimate(a: &Polygon, b: &Polygon, per_side: usize) -> f64 {
    let bb = a.bbox();
    let (w, h) = (bb.max.x - bb.min.x, bb.max.y - bb.min.y);
    let mut hits = 0usize;
    for i in 0..per_side {
        for j in 0..per_side {
            let p = PointXY::new(
                bb.min.x + (i as f64 + 0.5) * w / per_side as f64,
                bb.min.y + (j as f64 + 0.5) * h / per_side as f64,
            );
            if point_in_polygon(a, p) && point_in_polygon(b, p) {
                hits += 1;
            }
        }
    }
    hits as f64 / (per_side * per_side) as f64 * w * h
}

#[test]
fn non_convex_overlap_matches_grid_count() {
    let a = star((0.0, 0.0), &[60.0, 20.0, 70.0, 25.0, 55.0, 30.0, 65.0], 0.3);
    let b = star((20.0, 10.0), &[40.0, 75.0, 35.0, 60.0, 20.0], 1.1);
    let exact = intersection_area(&a, &b);
    let est = grid_estimate(&a, &b, 800);
    assert!((exact - est).abs() / exact < 0.01, "{exact} vs {est}");
}

#[test]
fn small_buffer_inside_large_one() {
    let c = PointXY::new(3.0, -7.0);
    let small = make_buffer(c, &BufferSpec::new(100.0, 64).unwrap());
    let large = make_buffer(c, &BufferSpec::new(500.0, 64).unwrap());
    assert!(rel_close(intersection_area(&small, &large), polygon_area(&small), 1e-12));
    assert!(rel_close(polygon_area(&small), std::f64::consts::PI * 1e4, 1e-12));
}
