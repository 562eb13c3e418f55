use std::f64::consts::{PI, TAU};

use super::{polar_angle, Mesh};
use crate::error::{Error, Result};

/// Default contact impedance, Ω·m.
pub const DEFAULT_CONTACT_IMPEDANCE: f64 = 0.01;

/// Boundary arc `[start, end]` in radians, `start < end`. The start angle of
/// an electrode centered at angle 0 is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodeArc {
    pub start: f64,
    pub end: f64,
}

impl ElectrodeArc {
    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.end - self.start)
    }

    /// Signed angular offset of `angle` from the arc center, in `(-π, π]`.
    pub fn offset(&self, angle: f64) -> f64 {
        let mut d = (angle - self.center()).rem_euclid(TAU);
        if d > PI {
            d -= TAU;
        }
        d
    }

    pub fn contains(&self, angle: f64) -> bool {
        self.offset(angle).abs() <= self.half_width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    arcs: Vec<ElectrodeArc>,
    contact_impedances: Vec<f64>,
}

impl ElectrodeLayout {
    pub fn new(arcs: Vec<ElectrodeArc>, contact_impedances: Vec<f64>) -> Result<Self> {
        if arcs.len() != contact_impedances.len() {
            return Err(Error::DimensionMismatch {
                what: "contact impedances",
                expected: arcs.len(),
                got: contact_impedances.len(),
            });
        }
        if let Some(z) = contact_impedances
            .iter()
            .find(|z| !(**z > 0.0 && z.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "contact impedance {z} must be positive"
            )));
        }
        for (l, a) in arcs.iter().enumerate() {
            if a.end.is_nan() || a.start.is_nan() || a.end <= a.start {
                return Err(Error::Electrodes(format!("electrode {l} has an empty arc")));
            }
        }
        // Counter-clockwise order and pairwise disjointness, including wrap-around.
        let n = arcs.len();
        let mut total = 0.0;
        for l in 0..n {
            let next = &arcs[(l + 1) % n];
            let mut gap = (next.start - arcs[l].end).rem_euclid(TAU);
            if n == 1 {
                gap = TAU - (arcs[l].end - arcs[l].start);
            }
            if gap <= 0.0 {
                return Err(Error::Electrodes(format!(
                    "electrodes {l} and {} overlap",
                    (l + 1) % n
                )));
            }
            total += (arcs[l].end - arcs[l].start) + gap;
        }
        if (total - TAU).abs() > 1e-9 {
            return Err(Error::Electrodes(
                "electrodes are not ordered counter-clockwise".into(),
            ));
        }
        Ok(Self {
            arcs,
            contact_impedances,
        })
    }

    pub fn count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[ElectrodeArc] {
        &self.arcs
    }

    pub fn contact_impedances(&self) -> &[f64] {
        &self.contact_impedances
    }

    /// Same arcs with a uniform contact impedance `z`.
    pub fn with_contact_impedance(&self, z: f64) -> Result<Self> {
        Self::new(self.arcs.clone(), vec![z; self.arcs.len()])
    }
}

/// Places `l_count` equispaced electrodes: electrode `l` is centered at
/// `2πl/L` and spans `coverage · 2π/L` radians.
pub fn place_electrodes(mesh: &Mesh, l_count: usize, coverage: f64) -> Result<ElectrodeLayout> {
    if l_count < 4 || !l_count.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "electrode count must be even and at least 4, got {l_count}"
        )));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "coverage {coverage} must lie in (0, 1)"
        )));
    }
    let boundary = mesh.boundary_nodes();
    if boundary.len() < 2 * l_count {
        return Err(Error::Electrodes(format!(
            "{} boundary nodes cannot carry {l_count} electrodes (need {})",
            boundary.len(),
            2 * l_count
        )));
    }
    let spacing = TAU / l_count as f64;
    let half = 0.5 * coverage * spacing;
    let arcs: Vec<ElectrodeArc> = (0..l_count)
        .map(|l| {
            let c = spacing * l as f64;
            ElectrodeArc {
                start: c - half,
                end: c + half,
            }
        })
        .collect();
    for (l, arc) in arcs.iter().enumerate() {
        let covered = boundary
            .iter()
            .any(|&v| arc.contains(polar_angle(mesh.nodes()[v])));
        if !covered {
            return Err(Error::Electrodes(format!(
                "electrode {l} covers no boundary node"
            )));
        }
    }
    ElectrodeLayout::new(arcs, vec![DEFAULT_CONTACT_IMPEDANCE; l_count])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn sixteen_equispaced_arcs() {
        let mesh = generate_disk_mesh(287, 0).unwrap();
        let layout = place_electrodes(&mesh, 16, 0.5).unwrap();
        assert_eq!(layout.count(), 16);
        for (l, arc) in layout.arcs().iter().enumerate() {
            assert!((arc.center().to_degrees() - 22.5 * l as f64).abs() < 1e-9);
            assert!((arc.end - arc.start - 0.5 * TAU / 16.0).abs() < 1e-12);
        }
        assert!(layout
            .contact_impedances()
            .iter()
            .all(|&z| z == DEFAULT_CONTACT_IMPEDANCE));
    }

    #[test]
    fn placement_is_deterministic() {
        let mesh = generate_disk_mesh(287, 0).unwrap();
        assert_eq!(
            place_electrodes(&mesh, 16, 0.5).unwrap(),
            place_electrodes(&mesh, 16, 0.5).unwrap()
        );
    }

    #[test]
    fn rejects_bad_counts() {
        let mesh = generate_disk_mesh(152, 0).unwrap();
        assert!(place_electrodes(&mesh, 3, 0.5).is_err());
        assert!(place_electrodes(&mesh, 7, 0.5).is_err());
        assert!(place_electrodes(&mesh, 16, 1.0).is_err());
    }

    #[test]
    fn coarse_mesh_cannot_carry_many_electrodes() {
        let mesh = generate_disk_mesh(40, 0).unwrap();
        assert!(matches!(
            place_electrodes(&mesh, 16, 0.5),
            Err(Error::Electrodes(_))
        ));
    }

    #[test]
    fn narrow_arc_without_node_fails() {
        // 2 * 16 boundary nodes, electrodes placed half a node spacing off-center
        // are impossible with `place_electrodes`, so check the coverage rule on a
        // very narrow arc instead.
        let mesh = generate_disk_mesh(287, 0).unwrap();
        let b = mesh.boundary_nodes().len();
        let err = place_electrodes(&mesh, 16, 1e-4);
        if !b.is_multiple_of(16) {
            assert!(err.is_err());
        }
    }

    #[test]
    fn layout_rejects_overlap_and_bad_impedance() {
        let a = ElectrodeArc {
            start: 0.0,
            end: 1.0,
        };
        let b = ElectrodeArc {
            start: 0.5,
            end: 2.0,
        };
        assert!(ElectrodeLayout::new(vec![a, b], vec![0.01, 0.01]).is_err());
        let c = ElectrodeArc {
            start: 3.0,
            end: 4.0,
        };
        assert!(ElectrodeLayout::new(vec![a, c], vec![0.01, 0.0]).is_err());
        assert!(ElectrodeLayout::new(vec![a, c], vec![0.01, 0.02]).is_ok());
    }
}
