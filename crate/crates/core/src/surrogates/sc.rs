//! Stochastic collocation: discrete projection of the targets onto the gPC
//! basis with the sparse-grid weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::SparseGrid;
use crate::viscosity::GpcBasis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScSurrogate {
    pub basis: GpcBasis,
    /// `lambda_k = sum_q lambda(xi_q) psi_k(xi_q) w_q`.
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub imag_coefficients: Option<Vec<f64>>,
}

fn project(grid: &SparseGrid, values: &[f64], basis: &GpcBasis) -> Vec<f64> {
    let mut c = vec![0.0; basis.len()];
    for ((x, w), v) in grid.nodes.iter().zip(&grid.weights).zip(values) {
        for (ck, pk) in c.iter_mut().zip(basis.eval(x)) {
            *ck += v * pk * w;
        }
    }
    c
}

/// Projects `targets` (one per grid node) onto `basis`; `imag`, when given,
/// is projected the same way.
pub fn sc_train(grid: &SparseGrid, targets: &[f64], imag: Option<&[f64]>, basis: &GpcBasis) -> Result<ScSurrogate> {
    if targets.len() != grid.len() || imag.is_some_and(|im| im.len() != grid.len()) {
        return Err(Error::Dimension(format!(
            "{} targets for {} grid nodes",
            targets.len(),
            grid.len()
        )));
    }
    if basis.dim != grid.dim || basis.family != grid.family {
        return Err(Error::Parameter("basis and grid disagree in dimension or family".into()));
    }
    Ok(ScSurrogate {
        basis: basis.clone(),
        coefficients: project(grid, targets, basis),
        imag_coefficients: imag.map(|im| project(grid, im, basis)),
    })
}

impl ScSurrogate {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.basis.eval(xi).iter().zip(&self.coefficients).map(|(p, c)| p * c).sum()
    }

    pub fn eval_imag(&self, xi: &[f64]) -> Option<f64> {
        let c = self.imag_coefficients.as_ref()?;
        Some(self.basis.eval(xi).iter().zip(c).map(|(p, c)| p * c).sum())
    }

    /// Mean from the coefficients (`psi_1 = 1`, all others have zero mean).
    pub fn mean(&self) -> f64 {
        self.coefficients[0]
    }

    /// Variance from the coefficients.
    pub fn variance(&self) -> f64 {
        self.coefficients[1..].iter().map(|c| c * c).sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut s = self.clone();
        s.coefficients.iter_mut().for_each(|c| *c *= a);
        if let Some(im) = &mut s.imag_coefficients {
            im.iter_mut().for_each(|c| *c *= a);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{smolyak, Family};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit(dim: usize, family: Family, f: impl Fn(&[f64]) -> f64) -> (SparseGrid, ScSurrogate) {
        let grid = smolyak(dim, 4, family).unwrap();
        let t: Vec<f64> = grid.nodes.iter().map(|x| f(x)).collect();
        let basis = GpcBasis::new(family, dim, 3);
        let s = sc_train(&grid, &t, None, &basis).unwrap();
        (grid, s)
    }

    #[test]
    fn basis_function_target_gives_unit_vector() {
        let basis = GpcBasis::new(Family::Hermite, 2, 3);
        let (_, s) = fit(2, Family::Hermite, |x| basis.eval(x)[1]);
        for (k, c) in s.coefficients.iter().enumerate() {
            let e = if k == 1 { 1.0 } else { 0.0 };
            assert!((c - e).abs() < 1e-10, "{k}: {c}");
        }
    }

    #[test]
    fn constant_target() {
        let (_, s) = fit(2, Family::Legendre, |_| 0.25);
        assert!((s.coefficients[0] - 0.25).abs() < 1e-14);
        assert!(s.coefficients[1..].iter().all(|c| c.abs() < 1e-14));
        assert!((s.eval(&[0.3, -0.9]) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn mismatched_targets_rejected() {
        let grid = smolyak(2, 4, Family::Hermite).unwrap();
        let basis = GpcBasis::new(Family::Hermite, 2, 3);
        assert!(sc_train(&grid, &[1.0; 5], None, &basis).is_err());
    }

    #[test]
    fn mean_matches_sampling() {
        let (_, s) = fit(2, Family::Hermite, |x| 0.1 + x[0] - 0.3 * x[0] * x[1] + 0.05 * x[1].powi(3));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let xi: Vec<f64> = (0..2).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                s.eval(&xi)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - s.mean()).abs() < 3.0 * se, "{mean} vs {} (se {se})", s.mean());
        assert!((s.variance() - var).abs() < 0.05 * var);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cubic_targets_are_reproduced(
            dim in 1usize..=5,
            hermite in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let family = if hermite { Family::Hermite } else { Family::Legendre };
            let basis = GpcBasis::new(family, dim, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let target = |x: &[f64]| basis.eval(x).iter().zip(&coeffs).map(|(p, c)| p * c).sum::<f64>();
            let (_, s) = fit(dim, family, target);
            for _ in 0..20 {
                let xi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                prop_assert!((s.eval(&xi) - target(&xi)).abs() < 1e-9);
            }
        }

        #[test]
        fn evaluation_is_linear_in_coefficients(a in -10.0f64..10.0, x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let (_, s) = fit(2, Family::Hermite, |v| (v[0] - v[1]).powi(2));
            prop_assert!((s.scaled(a).eval(&[x, y]) - a * s.eval(&[x, y])).abs() < 1e-12 * (1.0 + a.abs() * s.eval(&[x, y]).abs()));
        }
    }
}
