//! Smolyak grids built from nested-in-level Gauss rules and their exactness
//! on polynomials.

use flowstab::quadrature::{gauss_1d, smolyak, Family};

fn main() -> flowstab::Result<()> {
    let (x, w) = gauss_1d(Family::Hermite, 4)?;
    println!("4-point Gauss-Hermite nodes {x:.6?}\n  weights {w:.6?}");

    for family in [Family::Hermite, Family::Legendre] {
        println!("\n{family:?}");
        for level in 1..=5 {
            let grid = smolyak(2, level, family)?;
            // E[x^2 y^2] is 1 under the normal measure and 1/9 under the uniform one
            let m = grid.integrate(|p| p[0] * p[0] * p[1] * p[1]);
            println!("  level {level}: {:4} nodes, E[x^2 y^2] = {m:.12}", grid.len());
        }
    }

    let grid = smolyak(2, 4, Family::Hermite)?;
    print!("\n{}", grid.to_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
