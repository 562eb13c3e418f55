//! Force-equilibrium (distmesh-style) mesher for the unit disk.
//!
//! The quarter disk `x >= 0, y >= 0, |p| <= 1` is meshed with fixed,
//! equally spaced nodes along its three boundary pieces and a fixed number of
//! free interior nodes. Free nodes are relaxed by a truss of linear repulsive
//! springs and retriangulated as they move. The quarter is then reflected
//! across both axes.
//!
//! Because every boundary node is fixed and the domain is convex, a quarter
//! with `b` boundary nodes and `f` free nodes always triangulates into exactly
//! `b + 2f - 2` elements, so the element count is known before relaxing.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{delaunay, Mesh};
use crate::error::{Error, Result};

/// Minimum interior angle every generated element must satisfy.
pub const MIN_ANGLE_DEG: f64 = 20.0;

const MAX_ITERS: usize = 200;
const MAX_ATTEMPTS: u64 = 8;
const DELTA_T: f64 = 0.2;
const F_SCALE: f64 = 1.2;
const RETRIANGULATE_TOL: f64 = 0.1;
const CONVERGED_TOL: f64 = 1e-3;
const WALL_MARGIN: f64 = 0.25;

/// Resolution of a quarter-disk mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshParams {
    /// Segments along the quarter arc; the full boundary has `4 * arc_segments` nodes.
    pub arc_segments: usize,
    /// Segments along each straight edge of the quarter.
    pub axis_segments: usize,
    /// Free interior nodes per quarter.
    pub free_nodes: usize,
}

impl MeshParams {
    /// Picks a resolution whose element count is close to `target`. The
    /// boundary is slightly finer than the interior.
    pub fn for_target(target: usize) -> Self {
        let t = target as f64;
        let h = (4.0 * PI / (3f64.sqrt() * t)).sqrt();
        let nominal_arc = ((FRAC_PI_2 / (0.9 * h)).round() as usize).max(2);
        let axis_segments = ((1.0 / h).round() as usize).max(1);
        let candidate = |arc: usize| {
            let base = (arc + 2 * axis_segments) as f64 - 2.0;
            let free = ((t / 4.0 - base) / 2.0).round().max(0.0) as usize;
            MeshParams {
                arc_segments: arc,
                axis_segments,
                free_nodes: free,
            }
        };
        let rel_err = |p: &MeshParams| (p.element_count() as f64 - t).abs() / t;
        let mut best = candidate(nominal_arc);
        if rel_err(&best) > 0.05 {
            for arc in [nominal_arc + 1, nominal_arc.saturating_sub(1)] {
                if arc < 2 {
                    continue;
                }
                let c = candidate(arc);
                if rel_err(&c) < rel_err(&best) {
                    best = c;
                }
            }
        }
        best
    }

    fn quarter_boundary_nodes(&self) -> usize {
        self.arc_segments + 2 * self.axis_segments
    }

    pub fn element_count(&self) -> usize {
        4 * (self.quarter_boundary_nodes() - 2 + 2 * self.free_nodes)
    }
}

/// Generates a mirror-symmetric triangular mesh of the unit disk with about
/// `target_element_count` elements. Deterministic in `(target, seed)`.
pub fn generate_disk_mesh(target_element_count: usize, seed: u64) -> Result<Mesh> {
    if target_element_count < 16 {
        return Err(Error::InvalidArgument(format!(
            "target element count {target_element_count} is below the minimum of 16"
        )));
    }
    let params = MeshParams::for_target(target_element_count);
    let got = params.element_count() as f64;
    if (got - target_element_count as f64).abs() > 0.15 * target_element_count as f64 {
        return Err(Error::MeshGeneration(format!(
            "no resolution gives {target_element_count} elements within 15% (closest {got})"
        )));
    }
    let mut worst = f64::INFINITY;
    for attempt in 0..MAX_ATTEMPTS {
        let attempt_seed = seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let Some((pts, tris)) = relax_quarter(&params, attempt_seed) else {
            continue;
        };
        let mesh = mirror_quarter(&pts, &tris)?;
        let angle = mesh.min_angle_deg();
        if angle >= MIN_ANGLE_DEG {
            return Ok(mesh);
        }
        worst = worst.min(angle);
    }
    Err(Error::MeshGeneration(format!(
        "minimum angle {MIN_ANGLE_DEG} deg not reached after {MAX_ATTEMPTS} attempts (best {worst:.1} deg)"
    )))
}

fn quarter_fixed_nodes(params: &MeshParams) -> Vec<Point2<f64>> {
    let mut pts = Vec::with_capacity(params.quarter_boundary_nodes());
    pts.push(Point2::new(0.0, 0.0));
    for k in 0..=params.arc_segments {
        let a = FRAC_PI_2 * k as f64 / params.arc_segments as f64;
        let p = match k {
            0 => Point2::new(1.0, 0.0),
            k if k == params.arc_segments => Point2::new(0.0, 1.0),
            _ => Point2::new(a.cos(), a.sin()),
        };
        pts.push(p);
    }
    for k in 1..params.axis_segments {
        let s = k as f64 / params.axis_segments as f64;
        pts.push(Point2::new(s, 0.0));
        pts.push(Point2::new(0.0, s));
    }
    pts
}

/// Pushes `p` back inside the quarter, at least `margin` from every wall.
fn clamp_inside(p: &mut Point2<f64>, margin: f64) {
    p.x = p.x.max(margin);
    p.y = p.y.max(margin);
    let r = p.coords.norm();
    if r > 1.0 - margin {
        p.coords *= (1.0 - margin) / r;
    }
}

type Triangulation = (Vec<Point2<f64>>, Vec<[usize; 3]>);

fn relax_quarter(params: &MeshParams, seed: u64) -> Option<Triangulation> {
    let mut pts = quarter_fixed_nodes(params);
    let n_fixed = pts.len();
    let h = FRAC_PI_2 / params.arc_segments as f64;
    let margin = WALL_MARGIN * h;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while pts.len() < n_fixed + params.free_nodes {
        let p = Point2::new(rng.random::<f64>(), rng.random::<f64>());
        if p.x > margin && p.y > margin && p.coords.norm() < 1.0 - margin {
            pts.push(p);
        }
    }

    let mut anchor = pts.clone();
    let mut tris = delaunay::triangulate(&pts);
    let mut bars = unique_bars(&tris);
    for _ in 0..MAX_ITERS {
        let moved = pts
            .iter()
            .zip(&anchor)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if moved > RETRIANGULATE_TOL * h {
            anchor = pts.clone();
            tris = delaunay::triangulate(&pts);
            bars = unique_bars(&tris);
        }
        if bars.is_empty() {
            break;
        }
        let lengths: Vec<f64> = bars
            .iter()
            .map(|&(a, b)| (pts[a] - pts[b]).norm())
            .collect();
        let mean_sq = lengths.iter().map(|l| l * l).sum::<f64>() / lengths.len() as f64;
        let rest = F_SCALE * mean_sq.sqrt();
        let mut force = vec![Vector2::zeros(); pts.len()];
        for (&(a, b), &len) in bars.iter().zip(&lengths) {
            if len <= 0.0 {
                continue;
            }
            let f = (rest - len).max(0.0) / len * (pts[a] - pts[b]);
            force[a] += f;
            force[b] -= f;
        }
        let mut max_step: f64 = 0.0;
        for i in n_fixed..pts.len() {
            let old = pts[i];
            pts[i] += DELTA_T * force[i];
            clamp_inside(&mut pts[i], margin);
            max_step = max_step.max((pts[i] - old).norm());
        }
        if max_step < CONVERGED_TOL * h {
            break;
        }
    }

    let tris = delaunay::triangulate(&pts);
    let expected = params.quarter_boundary_nodes() - 2 + 2 * params.free_nodes;
    (tris.len() == expected).then_some((pts, tris))
}

fn unique_bars(tris: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut bars: Vec<(usize, usize)> = tris
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    bars.sort_unstable();
    bars.dedup();
    bars
}

/// Reflects the first-quadrant mesh into all four quadrants, merging nodes on
/// the axes. Reflections across a single axis flip element orientation.
fn mirror_quarter(pts: &[Point2<f64>], tris: &[[usize; 3]]) -> Result<Mesh> {
    let key = |p: Point2<f64>| ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits());
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut nodes: Vec<Point2<f64>> = Vec::new();
    let mut elements = Vec::with_capacity(4 * tris.len());
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let map: Vec<usize> = pts
            .iter()
            .map(|p| {
                let q = Point2::new(sx * p.x + 0.0, sy * p.y + 0.0);
                *index.entry(key(q)).or_insert_with(|| {
                    nodes.push(q);
                    nodes.len() - 1
                })
            })
            .collect();
        let flip = sx * sy < 0.0;
        for t in tris {
            let [a, b, c] = [map[t[0]], map[t[1]], map[t[2]]];
            elements.push(if flip { [a, c, b] } else { [a, b, c] });
        }
    }
    Mesh::new(nodes, elements)
}
