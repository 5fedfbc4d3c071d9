//! Gaussian-process regression with constant mean, squared-exponential
//! correlation `exp(-|xi - xi'|^2 / (2 sigma_l))` and the profiled
//! likelihood for `sigma_l`.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use super::{Scaler, TrainingSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    /// Search bracket for `sigma_l`.
    pub bracket: [f64; 2],
    /// Log-uniform sweep points before golden-section refinement.
    pub sweep: usize,
    pub restarts: usize,
    /// Initial diagonal jitter relative to `trace(C_d) / n_d`.
    pub jitter: f64,
    pub max_jitter: f64,
    /// Skip the search and use this correlation length.
    #[serde(default)]
    pub sigma_l: Option<f64>,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            bracket: [1e-2, 1e2],
            sweep: 200,
            restarts: 3,
            jitter: 1e-10,
            max_jitter: 1e-6,
            sigma_l: None,
        }
    }
}

pub fn correlation(a: &[f64], b: &[f64], sigma_l: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-0.5 * r2 / sigma_l).exp()
}

/// Posterior state of a trained GP. Means and variances are kept in scaled
/// units; `eval` and `var` descale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpSurrogate {
    pub scaler: Scaler,
    pub design: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub sigma_l: f64,
    pub jitter: f64,
    pub mu: f64,
    pub sigma_f2: f64,
    pub log_likelihood: f64,
    /// `C_d^{-1} (lambda - mu H)`.
    pub alpha: Vec<f64>,
    /// `C_d^{-1} H`.
    pub cinv_h: Vec<f64>,
    pub h_cinv_h: f64,
    #[serde(skip)]
    chol: Option<Mat<f64>>,
}

fn cholesky(design: &[Vec<f64>], sigma_l: f64, jitter: f64) -> Option<Mat<f64>> {
    let n = design.len();
    let c = Mat::<f64>::from_fn(n, n, |i, j| {
        correlation(&design[i], &design[j], sigma_l) + if i == j { jitter } else { 0.0 }
    });
    let llt = c.llt(Side::Lower).ok()?;
    let l = llt.L().to_owned();
    if (0..n).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
        return None;
    }
    Some(l)
}

fn forward(l: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * x[k]).sum();
        x[i] = (x[i] - s) / l[(i, i)];
    }
    x
}

fn backward(l: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (x[i] - s) / l[(i, i)];
    }
    x
}

fn chol_solve(l: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    backward(l, &forward(l, b))
}

struct Fit {
    chol: Mat<f64>,
    jitter: f64,
    mu: f64,
    sigma_f2: f64,
    alpha: Vec<f64>,
    cinv_h: Vec<f64>,
    h_cinv_h: f64,
    log_likelihood: f64,
}

fn fit_fixed(design: &[Vec<f64>], y: &[f64], sigma_l: f64, settings: &GpSettings) -> Result<Fit> {
    let n = y.len();
    // trace(C_d) / n_d is 1 for a correlation matrix
    let mut jitter = settings.jitter;
    let chol = loop {
        if let Some(l) = cholesky(design, sigma_l, jitter) {
            break l;
        }
        jitter *= 10.0;
        if jitter > settings.max_jitter * (1.0 + 1e-9) {
            return Err(Error::Conditioning(format!(
                "correlation matrix not positive definite at sigma_l = {sigma_l:.3e} with jitter up to {:.0e}",
                settings.max_jitter
            )));
        }
    };
    let ones = vec![1.0; n];
    let cinv_h = chol_solve(&chol, &ones);
    let cinv_y = chol_solve(&chol, y);
    let h_cinv_h: f64 = cinv_h.iter().sum();
    let mu = cinv_y.iter().sum::<f64>() / h_cinv_h;
    let resid: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let alpha = chol_solve(&chol, &resid);
    let sigma_f2 = resid.iter().zip(&alpha).map(|(r, a)| r * a).sum::<f64>().max(0.0);
    let log_det: f64 = 2.0 * (0..n).map(|i| chol[(i, i)].ln()).sum::<f64>();
    let log_likelihood = -0.5 * (n as f64 - 1.0) * sigma_f2.ln() - 0.5 * log_det - 0.5 * h_cinv_h.ln();
    Ok(Fit {
        chol,
        jitter,
        mu,
        sigma_f2,
        alpha,
        cinv_h,
        h_cinv_h,
        log_likelihood,
    })
}

/// Profiled log-likelihood of `sigma_l` for scaled targets `y`, or `-inf`
/// where the correlation matrix cannot be factored.
pub fn log_likelihood(design: &[Vec<f64>], y: &[f64], sigma_l: f64, settings: &GpSettings) -> f64 {
    match fit_fixed(design, y, sigma_l, settings) {
        Ok(f) if f.log_likelihood.is_finite() => f.log_likelihood,
        _ => f64::NEG_INFINITY,
    }
}

/// Golden-section search for a maximum on `[a, b]`, stopped at width `tol`
/// so that the result is insensitive to roundoff in `f`.
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Maximizer of the profiled likelihood over the bracket: a log-uniform
/// sweep, then golden-section refinement around the best local maxima.
pub fn optimize_sigma_l(design: &[Vec<f64>], y: &[f64], settings: &GpSettings) -> Result<f64> {
    let [lo, hi] = settings.bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Parameter(format!("invalid sigma_l bracket [{lo}, {hi}]")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let m = settings.sweep.max(3);
    let ts: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
    let ll: Vec<f64> = ts.iter().map(|t| log_likelihood(design, y, t.exp(), settings)).collect();
    let mut peaks: Vec<usize> = (0..m)
        .filter(|&i| ll[i].is_finite() && (i == 0 || ll[i] >= ll[i - 1]) && (i == m - 1 || ll[i] >= ll[i + 1]))
        .collect();
    if peaks.is_empty() {
        return Err(Error::Conditioning("likelihood undefined over the whole bracket".into()));
    }
    peaks.sort_by(|&i, &j| ll[j].total_cmp(&ll[i]));
    let mut best = (ts[peaks[0]], ll[peaks[0]]);
    for &i in peaks.iter().take(settings.restarts.max(1)) {
        let (l, r) = (ts[i.saturating_sub(1)], ts[(i + 1).min(m - 1)]);
        let (t, v) = golden(|t| log_likelihood(design, y, t.exp(), settings), l, r, 1e-4);
        if v > best.1 {
            best = (t, v);
        }
    }
    Ok(best.0.exp())
}

/// Trains on the standardized targets of `set`.
pub fn gp_train(set: &TrainingSet, settings: &GpSettings) -> Result<GpSurrogate> {
    for i in 0..set.len() {
        for j in 0..i {
            if set.inputs[i] == set.inputs[j] {
                return Err(Error::Parameter(format!("design points {j} and {i} coincide")));
            }
        }
    }
    let y = set.scaled_targets();
    let constant = y.iter().all(|v| *v == 0.0);
    let sigma_l = match settings.sigma_l {
        Some(s) => s,
        // every sigma_l fits constant data exactly
        None if constant => 1.0,
        None => optimize_sigma_l(&set.inputs, &y, settings)?,
    };
    let fit = fit_fixed(&set.inputs, &y, sigma_l, settings)?;
    Ok(GpSurrogate {
        scaler: set.scaler,
        design: set.inputs.clone(),
        targets: y,
        sigma_l,
        jitter: fit.jitter,
        mu: if constant { 0.0 } else { fit.mu },
        sigma_f2: if constant { 0.0 } else { fit.sigma_f2 },
        log_likelihood: fit.log_likelihood,
        alpha: if constant { vec![0.0; set.len()] } else { fit.alpha },
        cinv_h: fit.cinv_h,
        h_cinv_h: fit.h_cinv_h,
        chol: Some(fit.chol),
    })
}

impl GpSurrogate {
    /// Rebuilds the Cholesky factor after deserialization.
    pub fn refactor(&mut self) -> Result<()> {
        self.chol = Some(cholesky(&self.design, self.sigma_l, self.jitter).ok_or_else(|| {
            Error::Conditioning("stored GP correlation matrix is not positive definite".into())
        })?);
        Ok(())
    }

    /// Correlations with the design; the jitter acts as a nugget on exactly
    /// coincident points, so design rows of `C_d` are reproduced.
    fn correlations(&self, xi: &[f64]) -> Vec<f64> {
        self.design
            .iter()
            .map(|d| correlation(xi, d, self.sigma_l) + if d.as_slice() == xi { self.jitter } else { 0.0 })
            .collect()
    }

    /// Posterior mean `M*(xi)`, descaled.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        let r = self.correlations(xi);
        let m = self.mu + r.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        self.scaler.descale(m)
    }

    /// Posterior variance `R*(xi, xi)` with the `1 / (n_d - 3)` factor,
    /// descaled. Infinite when `n_d <= 3`.
    pub fn var(&self, xi: &[f64]) -> f64 {
        let n = self.design.len();
        if n <= 3 {
            return f64::INFINITY;
        }
        let chol = self.chol.as_ref().expect("GP factor missing; call refactor after deserializing");
        let r = self.correlations(xi);
        let z = forward(chol, &r);
        let rcr: f64 = z.iter().map(|v| v * v).sum();
        let q = 1.0 - r.iter().zip(&self.cinv_h).map(|(a, b)| a * b).sum::<f64>();
        let core = (1.0 + self.jitter - rcr + q * q / self.h_cinv_h).max(0.0);
        self.sigma_f2 / (n as f64 - 3.0) * core * self.scaler.std.powi(2)
    }

    /// `mu` in target units.
    pub fn mean_estimate(&self) -> f64 {
        self.scaler.descale(self.mu)
    }

    /// `sigma_f` in target units.
    pub fn sigma_f(&self) -> f64 {
        self.sigma_f2.sqrt() * self.scaler.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn two_point_closed_form() {
        let design = vec![vec![0.0], vec![1.0]];
        let (l1, l2) = (0.3, -0.5);
        let set = TrainingSet::new(design.clone(), vec![l1, l2]).unwrap();
        let settings = GpSettings {
            sigma_l: Some(1.0),
            ..Default::default()
        };
        let g = gp_train(&set, &settings).unwrap();
        let c = (-0.5f64).exp();
        let (y1, y2) = (set.scaler.scale(l1), set.scaler.scale(l2));
        // 2x2: C^{-1} = [1 -c; -c 1] / (1 - c^2)
        let mu = (y1 + y2) / 2.0;
        let d = y1 - y2;
        let sf2 = d * d / (2.0 * (1.0 - c));
        assert!((g.mu - mu).abs() < 1e-9);
        assert!((g.sigma_f2 - sf2).abs() < 1e-8 * sf2);
        assert!((g.h_cinv_h - 2.0 / (1.0 + c)).abs() < 1e-9);
    }

    #[test]
    fn constant_targets_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let design = random_design(&mut rng, 12, 2);
        let set = TrainingSet::new(design, vec![-0.0123; 12]).unwrap();
        let g = gp_train(&set, &GpSettings::default()).unwrap();
        assert_eq!(g.mean_estimate(), -0.0123);
        assert_eq!(g.sigma_f(), 0.0);
        assert_eq!(g.eval(&[0.4, 0.1]), -0.0123);
    }

    #[test]
    fn interpolates_design_with_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..10 {
            let n = rng.random_range(5..=30);
            let design = random_design(&mut rng, n, 2);
            let targets: Vec<f64> = design.iter().map(|x| (x[0] * 1.3).sin() + 0.2 * x[1] * x[1]).collect();
            let set = TrainingSet::new(design.clone(), targets.clone()).unwrap();
            let g = gp_train(&set, &GpSettings::default()).unwrap();
            for (x, t) in design.iter().zip(&targets) {
                assert!((g.eval(x) - t).abs() < 1e-8, "trial {trial}: {} vs {t}", g.eval(x));
                assert!(g.var(x) < 1e-8, "trial {trial}: var {}", g.var(x));
            }
        }
    }

    #[test]
    fn far_field_reverts_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let design = random_design(&mut rng, 10, 2);
        let targets: Vec<f64> = design.iter().map(|x| x[0] + x[1]).collect();
        let g = gp_train(&TrainingSet::new(design, targets).unwrap(), &GpSettings::default()).unwrap();
        let far = [1e3, -1e3];
        assert!((g.eval(&far) - g.mean_estimate()).abs() < 1e-12);
    }

    #[test]
    fn optimum_beats_audit_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let settings = GpSettings::default();
        for _ in 0..5 {
            let design = random_design(&mut rng, 15, 2);
            let targets: Vec<f64> = design.iter().map(|x| (x[0] - x[1]).cos() + 0.1 * x[0]).collect();
            let set = TrainingSet::new(design.clone(), targets).unwrap();
            let y = set.scaled_targets();
            let g = gp_train(&set, &settings).unwrap();
            let best = log_likelihood(&design, &y, g.sigma_l, &settings);
            for i in 0..50 {
                let s = (1e-2f64.ln() + (1e2f64.ln() - 1e-2f64.ln()) * (i as f64 + 0.37) / 50.0).exp();
                assert!(best >= log_likelihood(&design, &y, s, &settings) - 1e-9);
            }
        }
    }

    #[test]
    fn duplicate_design_rejected() {
        let set = TrainingSet::new(vec![vec![0.0], vec![0.0]], vec![1.0, 2.0]).unwrap();
        assert!(matches!(gp_train(&set, &GpSettings::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn json_round_trip_restores_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let design = random_design(&mut rng, 8, 2);
        let targets: Vec<f64> = design.iter().map(|x| x[0] * x[1]).collect();
        let g = gp_train(&TrainingSet::new(design, targets).unwrap(), &GpSettings::default()).unwrap();
        let s = super::super::Surrogate::Gp(g.clone());
        let (back, _) = super::super::Surrogate::from_json(&s.to_json(&Default::default()).unwrap()).unwrap();
        let super::super::Surrogate::Gp(h) = back else { panic!() };
        assert_eq!(g.eval(&[0.1, 0.2]), h.eval(&[0.1, 0.2]));
        assert!((g.var(&[0.1, 0.2]) - h.var(&[0.1, 0.2])).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn posterior_mean_is_affine_equivariant(a in 0.01f64..100.0, b in -5.0f64..5.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let design = random_design(&mut rng, 10, 2);
            let targets: Vec<f64> = design.iter().map(|x| (x[0] + 0.5 * x[1]).sin()).collect();
            let shifted: Vec<f64> = targets.iter().map(|t| a * t + b).collect();
            let g1 = gp_train(&TrainingSet::new(design.clone(), targets).unwrap(), &GpSettings::default()).unwrap();
            let g2 = gp_train(&TrainingSet::new(design, shifted).unwrap(), &GpSettings::default()).unwrap();
            let xi = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let (e1, e2) = (g1.eval(&xi), g2.eval(&xi));
            prop_assert!((e2 - (a * e1 + b)).abs() <= 1e-10 * (1.0 + (a * e1).abs() + b.abs()), "{} {} {} {} {} {}", g1.sigma_l, g2.sigma_l, g1.jitter, g2.jitter, e1, e2);
        }
    }
}
