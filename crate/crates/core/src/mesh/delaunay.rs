//! Bowyer-Watson Delaunay triangulation for small planar point sets.
//!
//! Quadratic in the number of points, which is plenty for the few hundred
//! nodes a relaxation pass retriangulates.

use nalgebra::Point2;

#[derive(Clone, Copy)]
struct Tri {
    v: [usize; 3],
}

fn orient(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `(a, b, c)`.
fn in_circle(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, d: Point2<f64>) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Counter-clockwise Delaunay triangles over `points`. Degenerate (zero-area)
/// triangles are dropped.
pub(crate) fn triangulate(points: &[Point2<f64>]) -> Vec<[usize; 3]> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-12);
    let (cx, cy) = (0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
    let big = 1e4 * span;

    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.push(Point2::new(cx - big, cy - big));
    pts.push(Point2::new(cx + big, cy - big));
    pts.push(Point2::new(cx, cy + big));

    let mut tris = vec![Tri {
        v: [n, n + 1, n + 2],
    }];
    let mut edges: Vec<(usize, usize)> = Vec::new();

    for (i, &p) in points.iter().enumerate() {
        edges.clear();
        let mut keep = Vec::with_capacity(tris.len() + 2);
        for t in tris.drain(..) {
            let [a, b, c] = t.v;
            if in_circle(pts[a], pts[b], pts[c], p) > 0.0 {
                edges.push((a, b));
                edges.push((b, c));
                edges.push((c, a));
            } else {
                keep.push(t);
            }
        }
        tris = keep;
        // Cavity boundary: edges not shared (in reverse) by two bad triangles.
        for k in 0..edges.len() {
            let (a, b) = edges[k];
            let shared = edges.iter().any(|&(c, d)| c == b && d == a);
            if !shared {
                tris.push(Tri { v: [a, b, i] });
            }
        }
    }

    tris.into_iter()
        .filter(|t| t.v.iter().all(|&v| v < n))
        .filter(|t| {
            let [a, b, c] = t.v;
            orient(pts[a], pts[b], pts[c]) > 1e-14 * span * span
        })
        .map(|t| t.v)
        .collect()
}
