//! Triangular meshes of the unit disk.
//!
//! Disk meshes are built from a relaxed quarter-disk mesh reflected across
//! both coordinate axes, so every generated mesh is exactly mirror-symmetric
//! about the x and y axes.

mod delaunay;
mod distmesh;
mod electrodes;

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Point2};

use crate::error::{Error, Result};

pub use distmesh::{generate_disk_mesh, MeshParams, MIN_ANGLE_DEG};
pub use electrodes::{place_electrodes, ElectrodeArc, ElectrodeLayout, DEFAULT_CONTACT_IMPEDANCE};

/// Geometric tolerance for nodes on the unit circle.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point2<f64>>,
    elements: Vec<[usize; 3]>,
    element_centers: Vec<Point2<f64>>,
    boundary_nodes: Vec<usize>,
}

fn signed_area(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
}

fn polar_angle(p: Point2<f64>) -> f64 {
    let a = p.y.atan2(p.x);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

impl Mesh {
    /// Builds a mesh and checks its invariants: valid distinct node indices,
    /// nodes inside the closed unit disk and counter-clockwise elements.
    pub fn new(nodes: Vec<Point2<f64>>, elements: Vec<[usize; 3]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidMesh("mesh has no elements".into()));
        }
        for (i, p) in nodes.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidMesh(format!("node {i} is not finite")));
            }
            if p.coords.norm() > 1.0 + GEOM_EPS {
                return Err(Error::InvalidMesh(format!(
                    "node {i} lies outside the unit disk"
                )));
            }
        }
        for (e, tri) in elements.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references a missing node"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("element {e} repeats a node")));
            }
            if signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "element {e} is not counter-clockwise"
                )));
            }
        }
        let element_centers = elements
            .iter()
            .map(|t| {
                let s = nodes[t[0]].coords + nodes[t[1]].coords + nodes[t[2]].coords;
                Point2::from(s / 3.0)
            })
            .collect();
        let boundary_nodes = find_boundary_nodes(&nodes, &elements);
        Ok(Self {
            nodes,
            elements,
            element_centers,
            boundary_nodes,
        })
    }

    pub fn nodes(&self) -> &[Point2<f64>] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn element_centers(&self) -> &[Point2<f64>] {
        &self.element_centers
    }

    /// Boundary node indices ordered counter-clockwise by polar angle, starting
    /// at the smallest angle in `[0, 2π)`.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.element_count())
            .map(|e| self.element_area(e))
            .sum()
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.elements
            .iter()
            .map(|t| triangle_min_angle(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the element containing `p`, if any.
    pub fn locate(&self, p: Point2<f64>) -> Option<usize> {
        let tol = -1e-12;
        self.elements.iter().position(|t| {
            let (a, b, c) = (self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]);
            signed_area(a, b, p) >= tol
                && signed_area(b, c, p) >= tol
                && signed_area(c, a, p) >= tol
        })
    }

    /// Boundary edges `(a, b)` oriented counter-clockwise around the domain.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: std::collections::HashMap<(usize, usize), usize> = Default::default();
        for t in &self.elements {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<(usize, usize)> = self
            .elements
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .filter(|&(a, b)| count[&(a.min(b), a.max(b))] == 1)
            .collect();
        out.sort_unstable();
        out
    }

    /// Sorted lists of elements sharing at least one node with each element.
    pub fn element_neighbors(&self) -> Vec<Vec<usize>> {
        let mut node_elems: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (e, t) in self.elements.iter().enumerate() {
            for &v in t {
                node_elems[v].push(e);
            }
        }
        self.elements
            .iter()
            .enumerate()
            .map(|(e, t)| {
                let mut nb: Vec<usize> = t
                    .iter()
                    .flat_map(|&v| node_elems[v].iter().copied())
                    .filter(|&o| o != e)
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect()
    }

    /// Writes the plain-text mesh format: a `nodes N elements M` header, then
    /// `x y` per node and 0-based `i j k` per element.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "nodes {} elements {}",
            self.nodes.len(),
            self.elements.len()
        )?;
        for p in &self.nodes {
            writeln!(w, "{} {}", p.x, p.y)?;
        }
        for t in &self.elements {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let parse_err = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (ln, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty mesh file"))?;
        let header = header?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "nodes" || tok[2] != "elements" {
            return Err(parse_err(ln, "expected `nodes N elements M`"));
        }
        let n: usize = tok[1]
            .parse()
            .map_err(|_| parse_err(ln, "bad node count"))?;
        let m: usize = tok[3]
            .parse()
            .map_err(|_| parse_err(ln, "bad element count"))?;
        let mut nodes = Vec::with_capacity(n);
        let mut elements = Vec::with_capacity(m);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(n, "truncated node list"))?;
            let line = line?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad coordinate"))?;
            if v.len() != 2 {
                return Err(parse_err(ln, "expected `x y`"));
            }
            nodes.push(Point2::new(v[0], v[1]));
        }
        for _ in 0..m {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(n + m, "truncated element list"))?;
            let line = line?;
            let v: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad node index"))?;
            if v.len() != 3 {
                return Err(parse_err(ln, "expected `i j k`"));
            }
            elements.push([v[0], v[1], v[2]]);
        }
        Self::new(nodes, elements)
    }
}

fn triangle_min_angle(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    let angle = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| {
        let u = q - p;
        let v = r - p;
        (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    };
    angle(a, b, c)
        .min(angle(b, c, a))
        .min(angle(c, a, b))
        .to_degrees()
}

fn find_boundary_nodes(nodes: &[Point2<f64>], elements: &[[usize; 3]]) -> Vec<usize> {
    let mut edges: Vec<(usize, usize)> = elements
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    let mut on_boundary = vec![false; nodes.len()];
    let mut i = 0;
    while i < edges.len() {
        let mut j = i + 1;
        while j < edges.len() && edges[j] == edges[i] {
            j += 1;
        }
        if j - i == 1 {
            on_boundary[edges[i].0] = true;
            on_boundary[edges[i].1] = true;
        }
        i = j;
    }
    let mut b: Vec<usize> = (0..nodes.len()).filter(|&v| on_boundary[v]).collect();
    b.sort_by(|&u, &v| polar_angle(nodes[u]).total_cmp(&polar_angle(nodes[v])));
    b
}

/// Symmetric 0/1 matrix with `S[i][j] = 1` iff elements `i != j` share a node.
pub fn element_adjacency(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.element_count();
    let mut s = DMatrix::zeros(n, n);
    for (i, nb) in mesh.element_neighbors().iter().enumerate() {
        for &j in nb {
            s[(i, j)] = 1.0;
        }
    }
    s
}

/// Number of connected components of an undirected graph given as neighbor lists.
pub fn connected_components(neighbors: &[Vec<usize>]) -> usize {
    let n = neighbors.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles_edge() -> Mesh {
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(0.5, 0.5),
            Point2::new(0.0, 0.5),
        ];
        Mesh::new(nodes, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn adjacency_shared_edge() {
        let s = element_adjacency(&two_triangles_edge());
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn adjacency_shared_node_only() {
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.4, 0.0),
            Point2::new(0.2, 0.3),
            Point2::new(-0.4, 0.0),
            Point2::new(-0.2, -0.3),
        ];
        let mesh = Mesh::new(nodes, vec![[0, 1, 2], [0, 3, 4]]).unwrap();
        let s = element_adjacency(&mesh);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn rejects_clockwise_and_dangling() {
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(0.0, 0.5),
        ];
        assert!(Mesh::new(nodes.clone(), vec![[0, 2, 1]]).is_err());
        assert!(Mesh::new(nodes.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Mesh::new(nodes, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn rejects_nodes_outside_disk() {
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.5, 0.0),
            Point2::new(0.0, 0.5),
        ];
        assert!(Mesh::new(nodes, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn centers_are_vertex_means() {
        let m = two_triangles_edge();
        let c = m.element_centers()[0];
        assert!((c.x - 1.0 / 3.0).abs() < 1e-15 && (c.y - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn text_format_round_trip() {
        let m = generate_disk_mesh(60, 3).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(buf.as_slice()).unwrap();
        assert_eq!(m, back);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!(
            "nodes {} elements {}\n",
            m.node_count(),
            m.element_count()
        )));
    }

    #[test]
    fn text_format_reports_line() {
        let bad = "nodes 3 elements 1\n0 0\n0.5 x\n0 0.5\n0 1 2\n";
        match Mesh::read_text(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn locate_finds_center_element() {
        let m = generate_disk_mesh(152, 0).unwrap();
        for (e, c) in m.element_centers().iter().enumerate() {
            assert_eq!(m.locate(*c), Some(e));
        }
    }
}
