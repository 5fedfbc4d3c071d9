//! Rightmost eigenvalues of the linearized flow past the obstacle as the
//! viscosity decreases, by shift-invert Arnoldi with a dense QZ check.

use flowstab::fem::{MixedSpace, PressureSpace, SpatialField};
use flowstab::mesh::ObstacleGeometry;
use flowstab::ns::{NavierStokes, SolverSettings};
use flowstab::stability::{build_problem, dense_rightmost, rightmost, EigenSettings, DEFAULT_DELTA};

fn main() -> flowstab::Result<()> {
    let mesh = ObstacleGeometry {
        length: 3.0,
        obstacle: [0.5, 1.5, -0.5, 0.5],
        nx: 2,
        ny: 2,
        stretch: None,
    }
    .build()?;
    let space = MixedSpace::new(mesh, PressureSpace::Q1)?;
    let settings = EigenSettings {
        k: 12,
        shifts: vec![[0.0, 0.0], [0.0, 1.5]],
        ..EigenSettings::default()
    };
    println!("    nu        rightmost (Arnoldi)          dense QZ            residual");
    for nu in [0.1, 0.05, 0.02, 0.01] {
        let field = SpatialField::constant(&space, nu)?;
        let ns = NavierStokes::new(&space, &field)?;
        let state = ns.solve_steady(&SolverSettings::default())?.state;
        let problem = build_problem(&ns, &state, DEFAULT_DELTA)?;
        let r = rightmost(&problem, &settings)?;
        let d = dense_rightmost(&problem)?;
        println!(
            "{nu:6}  {:+.6} {:+.6}i   {:+.6} {:+.6}i   {:.1e}",
            r.lambda.re, r.lambda.im, d.lambda.re, d.lambda.im, r.residual
        );
    }
    Ok(())
}
