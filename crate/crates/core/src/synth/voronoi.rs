//! Voronoi cells inside a rectangle by successive half-plane clipping.

use crate::geo::{BBox, PointXY};

/// Keeps the part of convex `poly` closer to `a` than to `b`.
fn clip_bisector(poly: &[PointXY], a: PointXY, b: PointXY) -> Vec<PointXY> {
    let (nx, ny) = (b.x - a.x, b.y - a.y);
    let c = (b.x * b.x + b.y * b.y - a.x * a.x - a.y * a.y) / 2.0;
    // inside when n·p <= c
    let side = |p: &PointXY| nx * p.x + ny * p.y - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push(PointXY::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
        }
    }
    out
}

/// One counter-clockwise ring per site, in site order. Sites must be
/// distinct and inside `bbox`.
pub fn voronoi_cells(sites: &[PointXY], bbox: &BBox) -> Vec<Vec<PointXY>> {
    let rect = vec![
        bbox.min,
        PointXY::new(bbox.max.x, bbox.min.y),
        bbox.max,
        PointXY::new(bbox.min.x, bbox.max.y),
    ];
    sites
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut others: Vec<(f64, usize)> = sites
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, o)| (s.distance(o), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut cell = rect.clone();
            for (d, j) in others {
                // a site farther than twice the cell's reach cannot cut it
                let reach = cell.iter().map(|v| s.distance(v)).fold(0.0, f64::max);
                if d > 2.0 * reach || cell.is_empty() {
                    break;
                }
                cell = clip_bisector(&cell, s, sites[j]);
            }
            cell
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Polygon;

    #[test]
    fn cells_tile_the_rectangle() {
        let bbox = BBox {
            min: PointXY::new(0.0, 0.0),
            max: PointXY::new(10.0, 6.0),
        };
        let sites = [
            PointXY::new(1.0, 1.0),
            PointXY::new(8.0, 2.0),
            PointXY::new(5.0, 5.0),
            PointXY::new(2.5, 4.0),
        ];
        let cells = voronoi_cells(&sites, &bbox);
        let total: f64 = cells.iter().map(|c| Polygon::new(c.clone(), vec![]).unwrap().area()).sum();
        assert!((total - 60.0).abs() < 1e-9);
        let two = voronoi_cells(&sites[..2], &bbox);
        // the bisector of (1,1) and (8,2) crosses y = 0 at x = 4.5 + 1.5/7
        let x0 = 4.5 + 1.5 / 7.0;
        assert!(two[0].iter().any(|p| (p.x - x0).abs() < 1e-9 && p.y == 0.0));
    }
}
