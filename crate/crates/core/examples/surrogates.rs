//! Stochastic collocation, Gaussian process and neural network emulators of
//! a smooth function of two standard normal inputs, trained on the same
//! 29-point sparse grid and checked on 1000 random draws.

use std::time::Instant;

use flowstab::assess::{rmse, SampleSet};
use flowstab::quadrature::{smolyak, Family};
use flowstab::surrogates::{
    gp_train, nn_train, sc_train, subsample_training, GpSettings, NnSettings, Provenance, Surrogate,
};
use flowstab::viscosity::GpcBasis;

fn target(x: &[f64]) -> f64 {
    0.05 + 0.02 * (0.4 * x[0]).tanh() - 0.004 * x[1] + 0.002 * x[0] * x[1]
}

fn main() -> flowstab::Result<()> {
    let grid = smolyak(2, 4, Family::Hermite)?;
    let y: Vec<f64> = grid.nodes.iter().map(|x| target(x)).collect();
    let test = SampleSet::generate(1000, 2, Family::Hermite, 11);
    let truth: Vec<f64> = test.draws.iter().map(|x| target(x)).collect();

    let sc = Surrogate::Sc(sc_train(&grid, &y, None, &GpcBasis::new(Family::Hermite, 2, 3))?);
    println!("training nodes: {}", grid.len());
    report(&sc, &test.draws, &truth)?;

    for stride in [5, 1] {
        let set = subsample_training(&grid, &y, stride)?;
        println!("\nstride {stride}: {} training points", set.len());
        let gp = Surrogate::Gp(gp_train(&set, &GpSettings::default())?);
        report(&gp, &test.draws, &truth)?;
        let nn = Surrogate::Nn(nn_train(&set, &NnSettings::default())?);
        report(&nn, &test.draws, &truth)?;
    }

    let path = std::env::temp_dir().join("flowstab-example-sc.json");
    sc.save(&path, &Provenance::default())?;
    let (back, _) = Surrogate::load(&path)?;
    println!("\nreloaded {} agrees: {}", back.name(), back.eval(&[0.3, -1.0]) == sc.eval(&[0.3, -1.0]));
    Ok(())
}

fn report(s: &Surrogate, xs: &[Vec<f64>], truth: &[f64]) -> flowstab::Result<()> {
    let t = Instant::now();
    let pred = s.eval_batch(xs)?;
    let dt = t.elapsed().as_secs_f64();
    println!("  {}: rmse {:.2e}, {} evaluations in {:.2e} s", s.name(), rmse(&pred, truth), xs.len(), dt);
    Ok(())
}
