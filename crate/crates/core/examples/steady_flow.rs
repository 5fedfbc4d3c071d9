//! Steady Navier–Stokes flow past the obstacle on a coarse mesh: Stokes
//! start, Picard steps, then Newton until the relative residual is small.

use flowstab::fem::{MixedSpace, PressureSpace, SpatialField};
use flowstab::mesh::ObstacleGeometry;
use flowstab::ns::{NavierStokes, SolverSettings};

fn main() -> flowstab::Result<()> {
    let mesh = ObstacleGeometry {
        length: 4.0,
        nx: 2,
        ny: 2,
        ..ObstacleGeometry::default()
    }
    .build()?;
    let space = MixedSpace::new(mesh, PressureSpace::Q1)?;
    println!("{} velocity and {} pressure dofs", space.n_u, space.n_p);

    for nu in [0.1, 0.02, 0.01] {
        let field = SpatialField::constant(&space, nu)?;
        let ns = NavierStokes::new(&space, &field)?;
        let sol = ns.solve_steady(&SolverSettings::default())?;
        println!("\nnu = {nu}");
        for t in &sol.trace {
            println!("  {:<7} residual {:.3e}  ratio {:.3e}", format!("{:?}", t.kind), t.residual, t.ratio);
        }
        let umax = sol.state.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("  max |u_h| = {umax:.4}");
    }
    Ok(())
}
