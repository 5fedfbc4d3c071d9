//! Q2 velocity / Q1 or P-1 pressure degree-of-freedom maps.

use serde::{Deserialize, Serialize};

use super::reference::{ReferenceQ2, CORNERS};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryKind, BoundaryTag, Mesh};

/// Pressure approximation paired with Q2 velocities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureSpace {
    /// Continuous bilinear pressure (Taylor-Hood).
    Q1,
    /// Discontinuous linear pressure `{1, x - xc, y - yc}` per element.
    P1Disc,
}

/// Per-element data at the 3x3 Gauss points.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    /// Quadrature weight times Jacobian determinant.
    pub wdet: [f64; 9],
    /// Physical gradients of the 9 local basis functions, `grad[q][k]`.
    pub grad: [[[f64; 2]; 9]; 9],
    /// Physical coordinates of the quadrature points.
    pub points: [[f64; 2]; 9],
    pub centre: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct MixedSpace {
    pub mesh: Mesh,
    pub pressure: PressureSpace,
    pub reference: ReferenceQ2,
    pub geometry: Vec<ElementGeometry>,
    /// Number of velocity nodes; x components occupy `0..n_nodes`, y
    /// components `n_nodes..2 n_nodes`.
    pub n_nodes: usize,
    pub n_u: usize,
    pub n_p: usize,
    pub pressure_dofs: Vec<Vec<usize>>,
    /// Sorted constrained velocity DOFs and their prescribed values.
    pub dirichlet: Vec<usize>,
    pub dirichlet_values: Vec<f64>,
    /// Unconstrained velocity DOFs in increasing order.
    pub free: Vec<usize>,
}

impl MixedSpace {
    pub fn new(mesh: Mesh, pressure: PressureSpace) -> Result<Self> {
        let reference = ReferenceQ2::new();
        let mut geometry = Vec::with_capacity(mesh.n_elements());
        for (ei, e) in mesh.elements.iter().enumerate() {
            let mut g = ElementGeometry {
                wdet: [0.0; 9],
                grad: [[[0.0; 2]; 9]; 9],
                points: [[0.0; 2]; 9],
                centre: mesh.nodes[e[4]],
            };
            for q in 0..9 {
                let jac = reference.jacobian(&mesh, e, q);
                if !(jac.det > 0.0) {
                    return Err(Error::InvalidGeometry(format!("element {ei} has nonpositive Jacobian")));
                }
                g.wdet[q] = reference.weight(q) * jac.det;
                g.points[q] = reference.map(&mesh, e, q);
                for k in 0..9 {
                    let d = reference.dphi(q)[k];
                    g.grad[q][k] = [
                        jac.inv_t[0][0] * d[0] + jac.inv_t[0][1] * d[1],
                        jac.inv_t[1][0] * d[0] + jac.inv_t[1][1] * d[1],
                    ];
                }
            }
            geometry.push(g);
        }

        let n_nodes = mesh.n_nodes();
        let pressure_dofs: Vec<Vec<usize>> = match pressure {
            PressureSpace::Q1 => {
                let mut vertex = vec![usize::MAX; n_nodes];
                let mut next = 0;
                for e in &mesh.elements {
                    for &c in &CORNERS {
                        if vertex[e[c]] == usize::MAX {
                            vertex[e[c]] = 0;
                        }
                    }
                }
                for v in vertex.iter_mut() {
                    if *v == 0 {
                        *v = next;
                        next += 1;
                    }
                }
                mesh.elements.iter().map(|e| CORNERS.iter().map(|&c| vertex[e[c]]).collect()).collect()
            }
            PressureSpace::P1Disc => (0..mesh.n_elements()).map(|k| vec![3 * k, 3 * k + 1, 3 * k + 2]).collect(),
        };
        let n_p = pressure_dofs.iter().flatten().max().map_or(0, |m| m + 1);

        let mut value: Vec<Option<f64>> = vec![None; 2 * n_nodes];
        for kind in [BoundaryKind::Inflow, BoundaryKind::Wall] {
            for edge in mesh.boundary.iter().filter(|b| b.kind == kind && b.tag == BoundaryTag::Dirichlet) {
                for &n in &edge.nodes {
                    let ux = match kind {
                        BoundaryKind::Inflow => mesh.inflow.velocity(mesh.nodes[n][1]),
                        _ => 0.0,
                    };
                    value[n] = Some(ux);
                    value[n_nodes + n] = Some(0.0);
                }
            }
        }
        let dirichlet: Vec<usize> = (0..2 * n_nodes).filter(|&i| value[i].is_some()).collect();
        let dirichlet_values = dirichlet.iter().map(|&i| value[i].unwrap_or(0.0)).collect();
        let free = (0..2 * n_nodes).filter(|&i| value[i].is_none()).collect();

        let space = Self {
            mesh,
            pressure,
            reference,
            geometry,
            n_nodes,
            n_u: 2 * n_nodes,
            n_p,
            pressure_dofs,
            dirichlet,
            dirichlet_values,
            free,
        };
        if space.n_u <= space.n_p {
            return Err(Error::InvalidGeometry(format!(
                "velocity space ({}) must be larger than pressure space ({})",
                space.n_u, space.n_p
            )));
        }
        Ok(space)
    }

    pub fn n_x(&self) -> usize {
        self.n_u + self.n_p
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    /// Values of the element's pressure basis at quadrature point `q`.
    pub fn pressure_basis(&self, element: usize, q: usize) -> Vec<f64> {
        match self.pressure {
            PressureSpace::Q1 => self.reference.corner_phi(q).to_vec(),
            PressureSpace::P1Disc => {
                let g = &self.geometry[element];
                vec![1.0, g.points[q][0] - g.centre[0], g.points[q][1] - g.centre[1]]
            }
        }
    }

    /// Full velocity vector holding the Dirichlet values and zeros elsewhere.
    pub fn dirichlet_vector(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.n_u];
        for (&i, &v) in self.dirichlet.iter().zip(&self.dirichlet_values) {
            u[i] = v;
        }
        u
    }

    /// Nodal interpolant of a velocity field.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_u];
        for (n, p) in self.mesh.nodes.iter().enumerate() {
            let v = f(p[0], p[1]);
            u[n] = v[0];
            u[self.n_nodes + n] = v[1];
        }
        u
    }

    /// Physical coordinates of every quadrature point, element-major.
    pub fn quadrature_points(&self) -> Vec<[f64; 2]> {
        self.geometry.iter().flat_map(|g| g.points).collect()
    }

    /// Velocity and its gradient at every quadrature point of an element:
    /// `(w, dw)` with `dw[c][d] = d w_c / d x_d`.
    pub fn velocity_at(&self, element: usize, w: &[f64]) -> [([f64; 2], [[f64; 2]; 2]); 9] {
        let e = &self.mesh.elements[element];
        let g = &self.geometry[element];
        let mut out = [([0.0; 2], [[0.0; 2]; 2]); 9];
        for (q, slot) in out.iter_mut().enumerate() {
            let phi = self.reference.phi(q);
            for k in 0..9 {
                for c in 0..2 {
                    let wk = w[c * self.n_nodes + e[k]];
                    slot.0[c] += phi[k] * wk;
                    slot.1[c][0] += g.grad[q][k][0] * wk;
                    slot.1[c][1] += g.grad[q][k][1] * wk;
                }
            }
        }
        out
    }
}

/// Scalar field sampled at every element quadrature point.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    values: Vec<f64>,
}

impl SpatialField {
    pub fn constant(space: &MixedSpace, c: f64) -> Result<Self> {
        Self::from_values(space, vec![c; 9 * space.n_elements()])
    }

    pub fn from_fn(space: &MixedSpace, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::from_values(space, space.quadrature_points().iter().map(|p| f(p[0], p[1])).collect())
    }

    pub fn from_values(space: &MixedSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != 9 * space.n_elements() {
            return Err(Error::Dimension(format!(
                "field has {} values, expected {}",
                values.len(),
                9 * space.n_elements()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!("viscosity must be positive, found {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, element: usize, q: usize) -> f64 {
        self.values[9 * element + q]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_obstacle_mesh, build_step_mesh};

    #[test]
    fn full_density_dof_counts() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, true, 4, 4).unwrap(), PressureSpace::Q1).unwrap();
        assert_eq!((s.n_u, s.n_p), (8416, 1096));
        let s = MixedSpace::new(build_obstacle_mesh(12.0, true, 4, 4).unwrap(), PressureSpace::Q1).unwrap();
        assert_eq!((s.n_u, s.n_p), (12640, 1640));
        let s = MixedSpace::new(build_step_mesh(4, 4).unwrap(), PressureSpace::P1Disc).unwrap();
        assert_eq!((s.n_u, s.n_p), (8338, 2928));
    }

    #[test]
    fn p1disc_dofs_are_element_local() {
        let s = MixedSpace::new(build_step_mesh(2, 2).unwrap(), PressureSpace::P1Disc).unwrap();
        let mut all: Vec<usize> = s.pressure_dofs.iter().flatten().copied().collect();
        assert!(s.pressure_dofs.iter().all(|d| d.len() == 3));
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 3 * s.n_elements());
    }

    #[test]
    fn dirichlet_values_follow_inflow_profile() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        assert!(s.dirichlet.iter().all(|&d| d < s.n_u));
        let u = s.dirichlet_vector();
        for (n, p) in s.mesh.nodes.iter().enumerate() {
            if p[0] == 0.0 {
                assert!((u[n] - (1.0 - p[1] * p[1])).abs() < 1e-14);
            }
        }
        // outflow nodes away from the walls are free
        let outflow_mid = s.mesh.nodes.iter().position(|p| p[0] == 8.0 && p[1] == 0.0).unwrap();
        assert!(s.free.binary_search(&outflow_mid).is_ok());
    }

    #[test]
    fn nonpositive_field_is_rejected() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        assert!(matches!(SpatialField::constant(&s, 0.0), Err(Error::Domain(_))));
    }
}
