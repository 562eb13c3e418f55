//! Complete electrode model on linear triangles.
//!
//! Unknowns are the node potentials followed by the electrode potentials.
//! Conductivity is piecewise constant per element. The electrode terms are
//! integrated exactly over the part of each boundary chord that falls inside
//! an electrode arc, so arcs need not line up with mesh nodes.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, Point2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{ElectrodeLayout, Mesh};
use crate::protocol::{measure, Protocol};

#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField(Vec<f64>);

impl ConductivityField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "conductivity of element {i} is {v}; must be positive"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Electrode currents in amperes; they must sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPattern(Vec<f64>);

impl CurrentPattern {
    pub fn new(currents: Vec<f64>) -> Result<Self> {
        let sum: f64 = currents.iter().sum();
        if sum.abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "currents sum to {sum:e}, expected zero"
            )));
        }
        Ok(Self(currents))
    }

    /// `amplitude` into `source`, out of `sink`.
    pub fn dipole(l_count: usize, source: usize, sink: usize, amplitude: f64) -> Self {
        let mut c = vec![0.0; l_count];
        c[source] += amplitude;
        c[sink] -= amplitude;
        Self(c)
    }

    pub fn currents(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub node_potentials: DVector<f64>,
    pub electrode_potentials: DVector<f64>,
}

impl ForwardSolution {
    pub fn zeros(nodes: usize, electrodes: usize) -> Self {
        Self {
            node_potentials: DVector::zeros(nodes),
            electrode_potentials: DVector::zeros(electrodes),
        }
    }
}

/// Measurement sensitivity `J[i][j] = ∂v_i/∂σ_j` at a reference conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub sigma0: ConductivityField,
}

impl Jacobian {
    /// Writes `rows cols` as little-endian u64 followed by row-major
    /// little-endian f64 entries.
    pub fn write_binary<W: Write>(matrix: &DMatrix<f64>, mut w: W) -> Result<()> {
        w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
        w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                w.write_all(&matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let cols = u64::from_le_bytes(word) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != rows * cols * 8 {
            return Err(Error::DimensionMismatch {
                what: "jacobian payload bytes",
                expected: rows * cols * 8,
                got: bytes.len(),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }
}

/// Integrals of the linear basis functions of one boundary node pair over the
/// part of an edge covered by one electrode, already divided by `z_l`.
#[derive(Debug, Clone, Copy)]
struct ElectrodeSegment {
    electrode: usize,
    nodes: [usize; 2],
    /// `∫ φ_a φ_a`, `∫ φ_a φ_b`, `∫ φ_b φ_b`
    mass: [f64; 3],
    /// `∫ φ_a`, `∫ φ_b`
    load: [f64; 2],
    length: f64,
}

/// Geometry-dependent, conductivity-independent pieces of the CEM system.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    mesh: Mesh,
    layout: ElectrodeLayout,
    /// Unit-conductivity element stiffness matrices.
    stiffness: Vec<Matrix3<f64>>,
    segments: Vec<ElectrodeSegment>,
    electrode_lengths: Vec<f64>,
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

impl ForwardModel {
    pub fn new(mesh: &Mesh, layout: &ElectrodeLayout) -> Result<Self> {
        let stiffness = mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(e, t)| {
                let p = [mesh.nodes()[t[0]], mesh.nodes()[t[1]], mesh.nodes()[t[2]]];
                let area = mesh.element_area(e);
                // Gradient of basis i is perp(opposite edge) / (2 area).
                let grads: Vec<Vector2<f64>> = (0..3)
                    .map(|i| {
                        let a = p[(i + 1) % 3];
                        let b = p[(i + 2) % 3];
                        Vector2::new(a.y - b.y, b.x - a.x) / (2.0 * area)
                    })
                    .collect();
                Matrix3::from_fn(|i, j| area * grads[i].dot(&grads[j]))
            })
            .collect();

        let mut segments = Vec::new();
        let mut electrode_lengths = vec![0.0; layout.count()];
        for (a, b) in mesh.boundary_edges() {
            let (pa, pb) = (mesh.nodes()[a], mesh.nodes()[b]);
            let theta_a = pa.y.atan2(pa.x);
            let mut sweep = pb.y.atan2(pb.x) - theta_a;
            if sweep <= -std::f64::consts::PI {
                sweep += std::f64::consts::TAU;
            } else if sweep > std::f64::consts::PI {
                sweep -= std::f64::consts::TAU;
            }
            let edge_len = (pb - pa).norm();
            for (l, arc) in layout.arcs().iter().enumerate() {
                let da = arc.offset(theta_a);
                let db = da + sweep;
                let w = arc.half_width();
                let (lo, hi) = (da.max(-w), db.min(w));
                if hi <= lo {
                    continue;
                }
                let t0 = chord_parameter(pa, pb, arc.center() + lo, lo == da, false);
                let t1 = chord_parameter(pa, pb, arc.center() + hi, false, hi == db);
                if t1 <= t0 {
                    continue;
                }
                let inv_z = 1.0 / layout.contact_impedances()[l];
                let (d1, d2, d3) = (t1 - t0, t1 * t1 - t0 * t0, t1.powi(3) - t0.powi(3));
                let s0 = 1.0 - t0;
                let s1 = 1.0 - t1;
                segments.push(ElectrodeSegment {
                    electrode: l,
                    nodes: [a, b],
                    mass: [
                        inv_z * edge_len * (s0.powi(3) - s1.powi(3)) / 3.0,
                        inv_z * edge_len * (d2 / 2.0 - d3 / 3.0),
                        inv_z * edge_len * d3 / 3.0,
                    ],
                    load: [
                        inv_z * edge_len * (d1 - d2 / 2.0),
                        inv_z * edge_len * d2 / 2.0,
                    ],
                    length: inv_z * edge_len * d1,
                });
                electrode_lengths[l] += edge_len * d1;
            }
        }
        if let Some(l) = electrode_lengths.iter().position(|&len| len <= 0.0) {
            return Err(Error::Electrodes(format!(
                "electrode {l} does not touch the mesh boundary"
            )));
        }
        Ok(Self {
            mesh: mesh.clone(),
            layout: layout.clone(),
            stiffness,
            segments,
            electrode_lengths,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn layout(&self) -> &ElectrodeLayout {
        &self.layout
    }

    /// Chord length covered by each electrode.
    pub fn electrode_lengths(&self) -> &[f64] {
        &self.electrode_lengths
    }

    pub fn unit_stiffness(&self, element: usize) -> &Matrix3<f64> {
        &self.stiffness[element]
    }

    /// Assembles and factorizes the CEM system for `sigma`.
    pub fn system(&self, sigma: &ConductivityField) -> Result<CemSystem> {
        let n = self.mesh.node_count();
        let l_count = self.layout.count();
        if sigma.len() != self.mesh.element_count() {
            return Err(Error::DimensionMismatch {
                what: "conductivity values",
                expected: self.mesh.element_count(),
                got: sigma.len(),
            });
        }
        let dim = n + l_count;
        let mut a = DMatrix::zeros(dim, dim);
        for ((t, k), &s) in self
            .mesh
            .elements()
            .iter()
            .zip(&self.stiffness)
            .zip(sigma.values())
        {
            for i in 0..3 {
                for j in 0..3 {
                    a[(t[i], t[j])] += s * k[(i, j)];
                }
            }
        }
        for seg in &self.segments {
            let [p, q] = seg.nodes;
            let e = n + seg.electrode;
            a[(p, p)] += seg.mass[0];
            a[(p, q)] += seg.mass[1];
            a[(q, p)] += seg.mass[1];
            a[(q, q)] += seg.mass[2];
            a[(p, e)] -= seg.load[0];
            a[(e, p)] -= seg.load[0];
            a[(q, e)] -= seg.load[1];
            a[(e, q)] -= seg.load[1];
            a[(e, e)] += seg.length;
        }
        CemSystem::new(a, n, l_count)
    }

    /// Solves every protocol pattern and flattens the result.
    pub fn measurements(
        &self,
        sigma: &ConductivityField,
        protocol: &Protocol,
    ) -> Result<DVector<f64>> {
        let sys = self.system(sigma)?;
        let sols = protocol
            .patterns()
            .iter()
            .map(|p| sys.solve(p))
            .collect::<Result<Vec<_>>>()?;
        measure(&sols, protocol)
    }
}

/// Chord parameter `t` of the point on segment `pa → pb` at polar angle `phi`.
/// Flags snap the result to the exact endpoints.
fn chord_parameter(
    pa: Point2<f64>,
    pb: Point2<f64>,
    phi: f64,
    at_start: bool,
    at_end: bool,
) -> f64 {
    if at_start {
        return 0.0;
    }
    if at_end {
        return 1.0;
    }
    let u = Vector2::new(phi.cos(), phi.sin());
    let d = pb - pa;
    (-cross(pa.coords, u) / cross(d, u)).clamp(0.0, 1.0)
}

/// The assembled CEM matrix and its grounded factorization.
///
/// The raw matrix annihilates the constant vector. Adding `c·w·wᵀ` with `w`
/// the indicator of the electrode unknowns makes it positive definite, and for
/// any current pattern summing to zero the solution satisfies `Σ U = 0`.
#[derive(Debug, Clone)]
pub struct CemSystem {
    matrix: DMatrix<f64>,
    nodes: usize,
    electrodes: usize,
    factor: Cholesky<f64, Dyn>,
    condition: f64,
}

impl CemSystem {
    fn new(matrix: DMatrix<f64>, nodes: usize, electrodes: usize) -> Result<Self> {
        let dim = nodes + electrodes;
        let scale = (nodes..dim).map(|i| matrix[(i, i)]).sum::<f64>() / electrodes as f64;
        let mut grounded = matrix.clone();
        for i in nodes..dim {
            for j in nodes..dim {
                grounded[(i, j)] += scale / electrodes as f64;
            }
        }
        let factor = Cholesky::new(grounded).ok_or_else(|| {
            Error::NotPositiveDefinite(
                "CEM system is singular (disconnected mesh or zero conductivity)".into(),
            )
        })?;
        let diag = factor.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
        let condition = (hi / lo).powi(2);
        Ok(Self {
            matrix,
            nodes,
            electrodes,
            factor,
            condition,
        })
    }

    /// The assembled (ungrounded) system matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Rough condition number estimate from the Cholesky diagonal.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, pattern: &CurrentPattern) -> Result<ForwardSolution> {
        if pattern.currents().len() != self.electrodes {
            return Err(Error::DimensionMismatch {
                what: "current pattern length",
                expected: self.electrodes,
                got: pattern.currents().len(),
            });
        }
        let mut rhs = DVector::zeros(self.nodes + self.electrodes);
        rhs.rows_mut(self.nodes, self.electrodes)
            .copy_from_slice(pattern.currents());
        let rhs_norm = rhs.norm();
        if rhs_norm == 0.0 {
            return Ok(ForwardSolution::zeros(self.nodes, self.electrodes));
        }
        let x = self.factor.solve(&rhs);
        let residual = (&self.matrix * &x - &rhs).norm() / rhs_norm;
        if residual.is_nan() || residual > 1e-10 {
            return Err(Error::SolveFailed {
                residual,
                condition: self.condition,
            });
        }
        let mut node_potentials = x.rows(0, self.nodes).into_owned();
        let mut electrode_potentials = x.rows(self.nodes, self.electrodes).into_owned();
        let shift = electrode_potentials.mean();
        node_potentials.add_scalar_mut(-shift);
        electrode_potentials.add_scalar_mut(-shift);
        Ok(ForwardSolution {
            node_potentials,
            electrode_potentials,
        })
    }
}

/// Assembles the CEM system for one conductivity field.
pub fn assemble_cem_system(
    mesh: &Mesh,
    layout: &ElectrodeLayout,
    sigma: &ConductivityField,
) -> Result<CemSystem> {
    ForwardModel::new(mesh, layout)?.system(sigma)
}

/// Adjoint-method Jacobian of the protocol measurements at `sigma0`.
///
/// For drive field `u_d` and the field `u_m` produced by driving the
/// measurement pair itself, `∂v/∂σ_e = -∫_e ∇u_m · ∇u_d`.
pub fn compute_jacobian(
    model: &ForwardModel,
    protocol: &Protocol,
    sigma0: &ConductivityField,
) -> Result<Jacobian> {
    let sys = model.system(sigma0)?;
    let l_count = protocol.electrode_count();
    let drive: Vec<DVector<f64>> = protocol
        .patterns()
        .iter()
        .map(|p| sys.solve(p).map(|s| s.node_potentials))
        .collect::<Result<_>>()?;
    let pairs = protocol.distinct_measure_pairs();
    let adjoint: Vec<DVector<f64>> = pairs
        .iter()
        .map(|&(a, b)| {
            sys.solve(&CurrentPattern::dipole(l_count, a, b, 1.0))
                .map(|s| s.node_potentials)
        })
        .collect::<Result<_>>()?;

    let mesh = model.mesh();
    let n_v = protocol.n_v();
    let mut j = DMatrix::zeros(protocol.n_m(), mesh.element_count());
    for (l, meas) in protocol.measure_pairs().iter().enumerate() {
        let ud = &drive[l];
        for (m, pair) in meas.iter().enumerate() {
            let um = &adjoint[pairs.binary_search(pair).expect("pair listed")];
            let row = l * n_v + m;
            for (e, t) in mesh.elements().iter().enumerate() {
                let k = model.unit_stiffness(e);
                let mut acc = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        acc += um[t[p]] * k[(p, q)] * ud[t[q]];
                    }
                }
                j[(row, e)] = -acc;
            }
        }
    }
    Ok(Jacobian {
        matrix: j,
        sigma0: sigma0.clone(),
    })
}
