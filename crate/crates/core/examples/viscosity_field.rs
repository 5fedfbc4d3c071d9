//! Karhunen–Loève modes of the squared-exponential kernel and the gPC
//! expansion of a lognormal viscosity, compared with the exact field.

use flowstab::fem::{MixedSpace, PressureSpace};
use flowstab::mesh::ObstacleGeometry;
use flowstab::viscosity::{build_affine, build_lognormal_cov, kl_decompose, KernelParams};

fn main() -> flowstab::Result<()> {
    let mesh = ObstacleGeometry {
        nx: 2,
        ny: 2,
        ..ObstacleGeometry::default()
    }
    .build()?;
    let space = MixedSpace::new(mesh, PressureSpace::Q1)?;
    let [x0, x1, y0, y1] = space.mesh.bounding_box();
    let params = KernelParams {
        sigma_g: 1.0,
        lx: 0.25 * (x1 - x0),
        ly: 0.25 * (y1 - y0),
    };
    let kl = kl_decompose(&space, &params, 6)?;
    println!("KL eigenvalues: {:?}", kl.eigenvalues.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>());

    let nu1 = 5.36193e-3;
    let probe = [0.5 * (x0 + x1), 0.5 * (y0 + y1)];
    let xi = [1.2, -0.7];
    for cov in [0.01, 0.1, 0.3] {
        let model = build_lognormal_cov(&space, nu1, cov, &kl, 2, 3, probe)?;
        let approx = model.values(&xi)?;
        let exact = model.exact_lognormal(&xi)?;
        let err = approx.iter().zip(&exact).map(|(a, e)| (a - e).abs() / e).fold(0.0, f64::max);
        let (lo, hi) = exact.iter().fold((f64::MAX, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        println!(
            "lognormal CoV {cov:4}: {} gPC terms, field in [{lo:.4e}, {hi:.4e}], max rel. gPC error {err:.1e}",
            model.n_nu()
        );
    }

    let affine = build_affine(&space, 4.5455e-3, 0.1, &kl, 2)?;
    let field = affine.evaluate(&space, &[1.0, 1.0])?;
    println!("affine CoV 0.1 at xi = (1, 1): min {:.4e}", field.min());
    Ok(())
}
