//! Discrete operators of the mixed Navier-Stokes formulation.
//!
//! All velocity operators act on full velocity vectors (both components,
//! including constrained DOFs); Dirichlet elimination happens in the solver.

use super::space::{MixedSpace, SpatialField};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

fn check_len(space: &MixedSpace, w: &[f64]) -> Result<()> {
    if w.len() != space.n_u {
        return Err(Error::Dimension(format!("velocity vector has {} entries, expected {}", w.len(), space.n_u)));
    }
    Ok(())
}

/// Scatters a 9x9 element block into both velocity components.
fn push_componentwise(space: &MixedSpace, e: &[usize; 9], local: &[[f64; 9]; 9], out: &mut Vec<(usize, usize, f64)>) {
    for c in 0..2 {
        let off = c * space.n_nodes;
        for i in 0..9 {
            for j in 0..9 {
                out.push((off + e[i], off + e[j], local[i][j]));
            }
        }
    }
}

/// Vector Laplacian `a_ij = int nu grad(phi_j) : grad(phi_i)`.
pub fn assemble_diffusion(space: &MixedSpace, nu: &SpatialField) -> Result<SparseMatrix> {
    if nu.values().len() != 9 * space.n_elements() {
        return Err(Error::Dimension("viscosity field does not match the space".into()));
    }
    let mut trip = Vec::with_capacity(162 * space.n_elements());
    for (el, e) in space.mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        let mut local = [[0.0; 9]; 9];
        for q in 0..9 {
            let s = g.wdet[q] * nu.at(el, q);
            if !(nu.at(el, q) > 0.0) {
                return Err(Error::Domain("viscosity must be positive".into()));
            }
            for i in 0..9 {
                let gi = g.grad[q][i];
                for j in 0..9 {
                    let gj = g.grad[q][j];
                    local[i][j] += s * (gi[0] * gj[0] + gi[1] * gj[1]);
                }
            }
        }
        push_componentwise(space, e, &local, &mut trip);
    }
    Ok(SparseMatrix::from_triplets(space.n_u, space.n_u, trip))
}

/// Vector convection `n_ij = int (w . grad phi_j) phi_i`.
pub fn assemble_convection(space: &MixedSpace, w: &[f64]) -> Result<SparseMatrix> {
    check_len(space, w)?;
    let mut trip = Vec::with_capacity(162 * space.n_elements());
    for (el, e) in space.mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        let vel = space.velocity_at(el, w);
        let mut local = [[0.0; 9]; 9];
        for q in 0..9 {
            let phi = space.reference.phi(q);
            let (wq, _) = vel[q];
            for j in 0..9 {
                let adv = g.wdet[q] * (wq[0] * g.grad[q][j][0] + wq[1] * g.grad[q][j][1]);
                for i in 0..9 {
                    local[i][j] += adv * phi[i];
                }
            }
        }
        push_componentwise(space, e, &local, &mut trip);
    }
    Ok(SparseMatrix::from_triplets(space.n_u, space.n_u, trip))
}

/// Newton derivative `w_(c,i),(d,j) = int phi_i phi_j d w_c / d x_d`.
pub fn assemble_newton_derivative(space: &MixedSpace, w: &[f64]) -> Result<SparseMatrix> {
    check_len(space, w)?;
    let mut trip = Vec::with_capacity(4 * 81 * space.n_elements());
    for (el, e) in space.mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        let vel = space.velocity_at(el, w);
        let mut local = [[[[0.0; 9]; 9]; 2]; 2];
        for q in 0..9 {
            let phi = space.reference.phi(q);
            let (_, dw) = vel[q];
            for i in 0..9 {
                for j in 0..9 {
                    let m = g.wdet[q] * phi[i] * phi[j];
                    for c in 0..2 {
                        for d in 0..2 {
                            local[c][d][i][j] += m * dw[c][d];
                        }
                    }
                }
            }
        }
        for c in 0..2 {
            for d in 0..2 {
                for i in 0..9 {
                    for j in 0..9 {
                        trip.push((c * space.n_nodes + e[i], d * space.n_nodes + e[j], local[c][d][i][j]));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(space.n_u, space.n_u, trip))
}

/// Divergence `b_kj = -int q_k div(phi_j)`, shape `n_p x n_u`.
pub fn assemble_divergence(space: &MixedSpace) -> SparseMatrix {
    let mut trip = Vec::new();
    for (el, e) in space.mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        let pd = &space.pressure_dofs[el];
        let mut local = vec![[[0.0; 9]; 2]; pd.len()];
        for q in 0..9 {
            let psi = space.pressure_basis(el, q);
            for (k, &pk) in psi.iter().enumerate() {
                for j in 0..9 {
                    for d in 0..2 {
                        local[k][d][j] -= g.wdet[q] * pk * g.grad[q][j][d];
                    }
                }
            }
        }
        for (k, &p) in pd.iter().enumerate() {
            for d in 0..2 {
                for j in 0..9 {
                    trip.push((p, d * space.n_nodes + e[j], local[k][d][j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(space.n_p, space.n_u, trip)
}

/// Vector mass matrix `g_ij = int phi_j phi_i`.
pub fn assemble_velocity_mass(space: &MixedSpace) -> SparseMatrix {
    let mut trip = Vec::with_capacity(162 * space.n_elements());
    for (el, e) in space.mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        let mut local = [[0.0; 9]; 9];
        for q in 0..9 {
            let phi = space.reference.phi(q);
            for i in 0..9 {
                for j in 0..9 {
                    local[i][j] += g.wdet[q] * phi[i] * phi[j];
                }
            }
        }
        push_componentwise(space, e, &local, &mut trip);
    }
    SparseMatrix::from_triplets(space.n_u, space.n_u, trip)
}

/// Load vector `int f . phi_i` of a body force.
pub fn assemble_body_force(space: &MixedSpace, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; space.n_u];
    for (el, e) in space.mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        for q in 0..9 {
            let fq = f(g.points[q][0], g.points[q][1]);
            let phi = space.reference.phi(q);
            for i in 0..9 {
                out[e[i]] += g.wdet[q] * fq[0] * phi[i];
                out[space.n_nodes + e[i]] += g.wdet[q] * fq[1] * phi[i];
            }
        }
    }
    out
}

/// Right-hand sides after lifting the Dirichlet data through the velocity
/// operator `op` and the divergence `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Forcing {
    /// Free rows hold `f - op u_D`; constrained rows hold the boundary values.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

pub fn assemble_forcing(space: &MixedSpace, op: &SparseMatrix, b: &SparseMatrix, body: &[f64]) -> Result<Forcing> {
    check_len(space, body)?;
    let ud = space.dirichlet_vector();
    let mut f = body.to_vec();
    op.mul_vec_acc(-1.0, &ud, &mut f);
    for (&i, &v) in space.dirichlet.iter().zip(&space.dirichlet_values) {
        f[i] = v;
    }
    let g = b.mul_vec(&ud).into_iter().map(|v| -v).collect();
    Ok(Forcing { f, g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::PressureSpace;
    use crate::mesh::{build_channel_mesh, build_obstacle_mesh, Mesh};

    fn unit_square(pressure: PressureSpace) -> MixedSpace {
        MixedSpace::new(build_channel_mesh(1.0, 1, 1).unwrap().shifted(0.0, 1.0).scaled_y(0.5), pressure).unwrap()
    }

    impl Mesh {
        fn shifted(mut self, dx: f64, dy: f64) -> Self {
            for p in &mut self.nodes {
                p[0] += dx;
                p[1] += dy;
            }
            self
        }
        fn scaled_y(mut self, s: f64) -> Self {
            for p in &mut self.nodes {
                p[1] *= s;
            }
            self
        }
    }

    /// Independent element oracle: the 9-node basis on `[0,1]^2` as tensor
    /// products of the quadratic Lagrange polynomials on {0, 1/2, 1},
    /// integrated with a 5-point Gauss rule (exact for these integrands).
    mod oracle {
        pub fn l(i: usize, x: f64) -> f64 {
            match i {
                0 => 2.0 * (x - 0.5) * (x - 1.0),
                1 => -4.0 * x * (x - 1.0),
                _ => 2.0 * x * (x - 0.5),
            }
        }
        pub fn dl(i: usize, x: f64) -> f64 {
            match i {
                0 => 4.0 * x - 3.0,
                1 => -8.0 * x + 4.0,
                _ => 4.0 * x - 1.0,
            }
        }
        pub fn phi(k: usize, x: f64, y: f64) -> f64 {
            l(k % 3, x) * l(k / 3, y)
        }
        pub fn grad(k: usize, x: f64, y: f64) -> [f64; 2] {
            [dl(k % 3, x) * l(k / 3, y), l(k % 3, x) * dl(k / 3, y)]
        }
        pub fn integrate(f: impl Fn(f64, f64) -> f64) -> f64 {
            let (x, w) = crate::quadrature::gauss_1d(crate::quadrature::Family::Legendre, 5).unwrap();
            let mut s = 0.0;
            for a in 0..5 {
                for b in 0..5 {
                    // uniform(-1,1) probability weights -> [0,1] Lebesgue
                    s += w[a] * w[b] * f(0.5 * (x[a] + 1.0), 0.5 * (x[b] + 1.0));
                }
            }
            s
        }
    }

    #[test]
    fn unit_square_geometry_is_canonical() {
        let s = unit_square(PressureSpace::Q1);
        let e = s.mesh.elements[0];
        for k in 0..9 {
            let p = s.mesh.nodes[e[k]];
            assert_eq!(p, [0.5 * (k % 3) as f64, 0.5 * (k / 3) as f64]);
        }
    }

    #[test]
    fn diffusion_matches_element_oracle() {
        let s = unit_square(PressureSpace::Q1);
        let a = assemble_diffusion(&s, &SpatialField::constant(&s, 1.0).unwrap()).unwrap();
        let e = s.mesh.elements[0];
        for i in 0..9 {
            for j in 0..9 {
                let want = oracle::integrate(|x, y| {
                    let (gi, gj) = (oracle::grad(i, x, y), oracle::grad(j, x, y));
                    gi[0] * gj[0] + gi[1] * gj[1]
                });
                assert!((a.get(e[i], e[j]) - want).abs() < 1e-13);
                assert!((a.get(s.n_nodes + e[i], s.n_nodes + e[j]) - want).abs() < 1e-13);
                assert_eq!(a.get(e[i], s.n_nodes + e[j]), 0.0);
            }
        }
    }

    #[test]
    fn convection_matches_element_oracle() {
        let s = unit_square(PressureSpace::Q1);
        let w = s.interpolate(|_, _| [1.0, 0.0]);
        let n = assemble_convection(&s, &w).unwrap();
        let e = s.mesh.elements[0];
        for i in 0..9 {
            for j in 0..9 {
                let want = oracle::integrate(|x, y| oracle::grad(j, x, y)[0] * oracle::phi(i, x, y));
                assert!((n.get(e[i], e[j]) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn newton_derivative_matches_element_oracle() {
        let s = unit_square(PressureSpace::Q1);
        let w = s.interpolate(|_, y| [y, 0.0]);
        let wm = assemble_newton_derivative(&s, &w).unwrap();
        let e = s.mesh.elements[0];
        let nn = s.n_nodes;
        for i in 0..9 {
            for j in 0..9 {
                // d u_x / d y = 1 couples x rows to y columns through the mass
                let want = oracle::integrate(|x, y| oracle::phi(i, x, y) * oracle::phi(j, x, y));
                assert!((wm.get(e[i], nn + e[j]) - want).abs() < 1e-13);
                assert!(wm.get(e[i], e[j]).abs() < 1e-13);
                assert!(wm.get(nn + e[i], e[j]).abs() < 1e-13);
                assert!(wm.get(nn + e[i], nn + e[j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn divergence_matches_element_oracle() {
        for pressure in [PressureSpace::Q1, PressureSpace::P1Disc] {
            let s = unit_square(pressure);
            let b = assemble_divergence(&s);
            assert_eq!(b.nrows(), s.n_p);
            let e = s.mesh.elements[0];
            let q = |k: usize, x: f64, y: f64| match pressure {
                PressureSpace::Q1 => {
                    let (a, c) = (k % 2, k / 2);
                    (if a == 0 { 1.0 - x } else { x }) * (if c == 0 { 1.0 - y } else { y })
                }
                PressureSpace::P1Disc => [1.0, x - 0.5, y - 0.5][k],
            };
            for (k, &p) in s.pressure_dofs[0].iter().enumerate() {
                for j in 0..9 {
                    for d in 0..2 {
                        let want = -oracle::integrate(|x, y| q(k, x, y) * oracle::grad(j, x, y)[d]);
                        assert!((b.get(p, d * s.n_nodes + e[j]) - want).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn mass_total_is_twice_area() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, true, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let g = assemble_velocity_mass(&s);
        let ones = vec![1.0; s.n_u];
        let total = crate::linalg::dot(&ones, &g.mul_vec(&ones));
        assert!((total - 2.0 * s.mesh.area()).abs() < 1e-10);
        assert!(g.max_abs_diff(&g.transpose()) < 1e-15);
    }

    #[test]
    fn diffusion_linear_and_symmetric() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let n1 = SpatialField::from_fn(&s, |x, y| 1.0 + 0.1 * x + y * y).unwrap();
        let n2 = SpatialField::from_fn(&s, |x, _| 2.0 + (x).sin()).unwrap();
        let a1 = assemble_diffusion(&s, &n1).unwrap();
        let a2 = assemble_diffusion(&s, &n2).unwrap();
        let comb = SpatialField::from_values(
            &s,
            n1.values().iter().zip(n2.values()).map(|(a, b)| 2.0 * a + 0.5 * b).collect(),
        )
        .unwrap();
        let ac = assemble_diffusion(&s, &comb).unwrap();
        let lin = a1.lin_comb(2.0, &a2, 0.5);
        assert!(ac.max_abs_diff(&lin) <= 1e-12 * ac.max_abs());
        assert!(a1.max_abs_diff(&a1.transpose()) <= 1e-12 * a1.max_abs());
    }

    #[test]
    fn convection_and_newton_vanish_and_scale() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let zero = vec![0.0; s.n_u];
        assert_eq!(assemble_convection(&s, &zero).unwrap().max_abs(), 0.0);
        assert_eq!(assemble_newton_derivative(&s, &zero).unwrap().max_abs(), 0.0);
        let w = s.interpolate(|x, y| [1.0 - y * y + 0.1 * x, 0.3 * x * y]);
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let n1 = assemble_convection(&s, &w).unwrap();
        let n2 = assemble_convection(&s, &w2).unwrap();
        assert!(n2.max_abs_diff(&n1.scaled(2.0)) <= 1e-13 * n2.max_abs());
        let m1 = assemble_newton_derivative(&s, &w).unwrap();
        let m2 = assemble_newton_derivative(&s, &w2).unwrap();
        assert!((m2.frobenius_norm() - 2.0 * m1.frobenius_norm()).abs() <= 1e-12 * m2.frobenius_norm());
        assert!(assemble_convection(&s, &w[1..]).is_err());
    }

    #[test]
    fn constant_velocity_is_discretely_divergence_free() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let b = assemble_divergence(&s);
        let u = s.interpolate(|_, _| [1.0, -0.5]);
        assert!(b.mul_vec(&u).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn forcing_zero_and_locality() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let a = assemble_diffusion(&s, &SpatialField::constant(&s, 1.0).unwrap()).unwrap();
        let b = assemble_divergence(&s);
        let body = assemble_body_force(&s, |_, _| [0.0, 0.0]);
        assert!(body.iter().all(|&v| v == 0.0));
        let forcing = assemble_forcing(&s, &a, &b, &body).unwrap();
        // only DOFs within one element of the inflow boundary see the lift
        let h = 0.25;
        for &i in &s.free {
            let x = s.mesh.nodes[i % s.n_nodes][0];
            if x > h + 1e-12 {
                assert_eq!(forcing.f[i], 0.0, "dof {i} at x={x}");
            }
        }
        assert!(s.free.iter().any(|&i| forcing.f[i] != 0.0));
    }
}
