//! Planar hulls: convex hull, alpha shape, area and diameter.

use delaunator::{triangulate, Point as DPoint, EMPTY};

/// Convex hull by monotone chain, counter-clockwise, collinear points dropped.
/// Fewer than three distinct points yield the distinct points themselves.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], *p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

#[inline]
fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a[0] * b[1] - a[1] * b[0];
    }
    s.abs() / 2.0
}

/// Largest pairwise distance of a point set, via its convex hull.
pub fn diameter(points: &[[f64; 2]]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            best = best.max(((hull[i][0] - hull[j][0]).powi(2) + (hull[i][1] - hull[j][1]).powi(2)).sqrt());
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaShape {
    pub area: f64,
    /// Indices of input points on the shape boundary, ascending.
    pub boundary: Vec<usize>,
    /// Number of Delaunay triangles kept.
    pub triangles: usize,
}

/// Union of the Delaunay triangles whose circumradius is at most `alpha`.
pub fn alpha_shape(points: &[[f64; 2]], alpha: f64) -> AlphaShape {
    let dp: Vec<DPoint> = points.iter().map(|p| DPoint { x: p[0], y: p[1] }).collect();
    let tri = triangulate(&dp);
    let n_tri = tri.triangles.len() / 3;
    let kept: Vec<bool> = (0..n_tri)
        .map(|t| {
            let [a, b, c] = [0, 1, 2].map(|k| points[tri.triangles[3 * t + k]]);
            circumradius(a, b, c) <= alpha
        })
        .collect();
    let mut area = 0.0;
    let mut boundary = Vec::new();
    for t in 0..n_tri {
        if !kept[t] {
            continue;
        }
        let [a, b, c] = [0, 1, 2].map(|k| points[tri.triangles[3 * t + k]]);
        area += cross(a, b, c).abs() / 2.0;
        for k in 0..3 {
            let e = 3 * t + k;
            let opp = tri.halfedges[e];
            if opp == EMPTY || !kept[opp / 3] {
                boundary.push(tri.triangles[e]);
                boundary.push(tri.triangles[if k == 2 { 3 * t } else { e + 1 }]);
            }
        }
    }
    boundary.sort_unstable();
    boundary.dedup();
    AlphaShape { area, boundary, triangles: kept.iter().filter(|k| **k).count() }
}

fn circumradius(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let bc = ((b[0] - c[0]).powi(2) + (b[1] - c[1]).powi(2)).sqrt();
    let ca = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2)).sqrt();
    let twice_area = cross(a, b, c).abs();
    if twice_area == 0.0 {
        return f64::INFINITY;
    }
    ab * bc * ca / (2.0 * twice_area)
}

/// Hull used for crown measurements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HullKind {
    /// Alpha shape with the given circumradius limit in meters; falls back to
    /// the convex hull when no triangle survives.
    Alpha(f64),
    Convex,
}

impl Default for HullKind {
    fn default() -> Self {
        HullKind::Alpha(1.0)
    }
}

/// `(area, diameter)` of the hull of `points`.
pub fn hull_measures(points: &[[f64; 2]], kind: HullKind) -> (f64, f64) {
    if let HullKind::Alpha(alpha) = kind {
        let shape = alpha_shape(points, alpha);
        if shape.triangles > 0 {
            let b: Vec<[f64; 2]> = shape.boundary.iter().map(|&i| points[i]).collect();
            return (shape.area, diameter(&b));
        }
    }
    let hull = convex_hull(points);
    (polygon_area(&hull), diameter(&hull))
}
