//! Degrees of freedom of the preset meshes and sizes of the gPC bases.

use flowstab::config::ExperimentConfig;
use flowstab::fem::MixedSpace;
use flowstab::quadrature::{smolyak, Family};
use flowstab::viscosity::gpc::n_terms;

fn main() -> flowstab::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    for name in ["obstacle-desk", "obstacle-paper", "step-desk", "step-paper"] {
        let cfg = ExperimentConfig::load(format!("{dir}/{name}.toml").as_ref())?;
        let mesh = cfg.mesh.build(cfg.benchmark)?;
        let n_el = mesh.n_elements();
        let space = MixedSpace::new(mesh, cfg.pressure)?;
        println!("{name:>15}: {n_el:5} elements, {:6} velocity, {:5} pressure dofs", space.n_u, space.n_p);
    }

    println!("\n m  n_xi(p=3)  n_q(level 4)");
    for m in 1..=5 {
        let grid = smolyak(m, 4, Family::Hermite)?;
        println!("{m:2}  {:9}  {:12}", n_terms(m, 3), grid.len());
    }
    Ok(())
}
