//! Stochastic viscosity fields `nu(x, xi) = sum_l nu_l(x) psi_l(xi)`.
//!
//! Two parameterizations are supported:
//! * lognormal, `nu = exp(g0 + sum_j g_j(x) xi_j)` with Gaussian `xi`,
//!   expanded in normalized Hermite polynomials of total degree `2p`;
//! * affine, `nu = nu_1 + sigma_nu sum_l sqrt(3 lambda_l) v_l(x) xi_l` with
//!   `xi` uniform on `(-1, 1)`.

pub mod gpc;
pub mod kl;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{MixedSpace, SpatialField};
use crate::quadrature::Family;
pub use gpc::GpcBasis;
pub use kl::{covariance_kernel, kl_decompose, KernelParams, KlExpansion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViscosityKind {
    Lognormal,
    Affine,
}

impl ViscosityKind {
    pub fn family(self) -> Family {
        match self {
            ViscosityKind::Lognormal => Family::Hermite,
            ViscosityKind::Affine => Family::Legendre,
        }
    }
}

/// Serializable description of a model, embedded in result files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityDescription {
    pub kind: ViscosityKind,
    pub nu1: f64,
    pub cov: f64,
    pub m: usize,
    pub basis_degree: usize,
    pub n_nu: usize,
    pub kernel: KernelParams,
    pub kl_eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ViscosityModel {
    pub kind: ViscosityKind,
    pub nu1: f64,
    pub cov: f64,
    pub basis: GpcBasis,
    /// Kernel of the underlying field; for lognormal models `sigma_g` is the
    /// standard deviation of the Gaussian process.
    pub kernel: KernelParams,
    /// `coefficients[l][k]`: `nu_l` at quadrature point `k`.
    pub coefficients: Vec<Vec<f64>>,
    /// Lognormal only: `g0` and `g_j` at the quadrature points.
    pub g0: f64,
    pub g: Vec<Vec<f64>>,
    pub kl_eigenvalues: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl ViscosityModel {
    pub fn n_nu(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn description(&self) -> ViscosityDescription {
        ViscosityDescription {
            kind: self.kind,
            nu1: self.nu1,
            cov: self.cov,
            m: self.dim(),
            basis_degree: self.basis.degree,
            n_nu: self.n_nu(),
            kernel: self.kernel,
            kl_eigenvalues: self.kl_eigenvalues.clone(),
        }
    }

    /// Raw expansion values at the quadrature points, without the positivity
    /// check.
    pub fn values(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.dim() {
            return Err(Error::Dimension(format!("xi has {} entries, expected {}", xi.len(), self.dim())));
        }
        let psi = self.basis.eval(xi);
        let n = self.coefficients[0].len();
        let mut out = vec![0.0; n];
        for (c, p) in self.coefficients.iter().zip(&psi) {
            if *p != 0.0 {
                out.iter_mut().zip(c).for_each(|(o, v)| *o += p * v);
            }
        }
        Ok(out)
    }

    /// Viscosity realization at `xi`; nonpositive values are a domain error.
    pub fn evaluate(&self, space: &MixedSpace, xi: &[f64]) -> Result<SpatialField> {
        SpatialField::from_values(space, self.values(xi)?)
    }

    /// Exact lognormal field `exp(g0 + sum_j g_j xi_j)` at the quadrature
    /// points.
    pub fn exact_lognormal(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if self.kind != ViscosityKind::Lognormal {
            return Err(Error::Parameter("exact evaluation is defined for lognormal models only".into()));
        }
        let n = self.coefficients[0].len();
        Ok((0..n)
            .map(|k| (self.g0 + self.g.iter().zip(xi).map(|(gj, x)| gj[k] * x).sum::<f64>()).exp())
            .collect())
    }
}

/// Affine model `nu_1 + sigma_nu sum_l sqrt(3 lambda_l) v_l(x) xi_l` with
/// `sigma_nu = CoV nu_1`; `kl` must come from the unit-variance kernel.
pub fn build_affine(space: &MixedSpace, nu1: f64, cov: f64, kl: &KlExpansion, m: usize) -> Result<ViscosityModel> {
    if !(nu1 > 0.0) || cov < 0.0 {
        return Err(Error::Parameter("affine model needs nu1 > 0 and CoV >= 0".into()));
    }
    if m == 0 || m > kl.n_modes() {
        return Err(Error::Parameter(format!("m = {m} not available from {} KL modes", kl.n_modes())));
    }
    let pts = space.quadrature_points();
    let sigma_nu = cov * nu1;
    let basis = GpcBasis::new(Family::Legendre, m, 1);
    let mut coefficients = vec![vec![nu1; pts.len()]];
    for l in 0..m {
        // psi = sqrt(3) xi for the normalized Legendre polynomial
        let scale = sigma_nu * (3.0 * kl.eigenvalues[l]).sqrt() / 3f64.sqrt();
        coefficients.push(pts.iter().map(|&x| scale * kl.mode_at(l, x)).collect());
    }
    Ok(ViscosityModel {
        kind: ViscosityKind::Affine,
        nu1,
        cov,
        basis,
        kernel: kl.params,
        coefficients,
        g0: 0.0,
        g: Vec::new(),
        kl_eigenvalues: kl.eigenvalues[..m].to_vec(),
    })
}

/// Lognormal model from `g0` and the KL coefficients `g_j` at the quadrature
/// points, expanded in normalized Hermite polynomials up to total degree
/// `degree`.
///
/// With `psi_n = He_n / sqrt(n!)` the expansion coefficients are
/// `exp(g0 + sum g_j^2 / 2) prod_j g_j^{n_j} / sqrt(n_j!)`.
pub fn build_lognormal(g0: f64, g: Vec<Vec<f64>>, m: usize, degree: usize) -> Result<ViscosityModel> {
    if g.len() != m || m == 0 {
        return Err(Error::Parameter(format!("expected {m} KL coefficient fields, got {}", g.len())));
    }
    let n = g[0].len();
    let basis = GpcBasis::new(Family::Hermite, m, degree);
    let base: Vec<f64> = (0..n)
        .map(|k| (g0 + 0.5 * g.iter().map(|gj| gj[k] * gj[k]).sum::<f64>()).exp())
        .collect();
    let coefficients = basis
        .indices
        .iter()
        .map(|alpha| {
            let norm: f64 = alpha.iter().map(|&a| factorial(a).sqrt()).product();
            (0..n)
                .map(|k| base[k] * alpha.iter().zip(&g).map(|(&a, gj)| gj[k].powi(a as i32)).product::<f64>() / norm)
                .collect()
        })
        .collect();
    Ok(ViscosityModel {
        kind: ViscosityKind::Lognormal,
        nu1: g0.exp(),
        cov: 0.0,
        basis,
        kernel: KernelParams {
            sigma_g: 0.0,
            lx: f64::INFINITY,
            ly: f64::INFINITY,
        },
        coefficients,
        g0,
        g,
        kl_eigenvalues: Vec::new(),
    })
}

/// Lognormal model with mean `nu1` and coefficient of variation `cov` at the
/// probe point. `kl` must come from the unit-variance kernel.
///
/// `sigma_g` solves `CoV^2 = exp(sum_j g_j(probe)^2) - 1` and
/// `g0 = log(nu1) - sum_j g_j(probe)^2 / 2`.
pub fn build_lognormal_cov(
    space: &MixedSpace,
    nu1: f64,
    cov: f64,
    kl: &KlExpansion,
    m: usize,
    p: usize,
    probe: [f64; 2],
) -> Result<ViscosityModel> {
    if !(nu1 > 0.0) || cov < 0.0 {
        return Err(Error::Parameter("lognormal model needs nu1 > 0 and CoV >= 0".into()));
    }
    if m == 0 || m > kl.n_modes() {
        return Err(Error::Parameter(format!("m = {m} not available from {} KL modes", kl.n_modes())));
    }
    let unit_var: f64 = (0..m).map(|l| kl.eigenvalues[l] * kl.mode_at(l, probe).powi(2)).sum();
    if !(unit_var > 0.0) {
        return Err(Error::Parameter("KL modes vanish at the probe; CoV is unreachable".into()));
    }
    let target = (1.0 + cov * cov).ln();
    let sigma_g = (target / unit_var).sqrt();
    if !sigma_g.is_finite() {
        return Err(Error::Parameter(format!("CoV {cov} is unreachable")));
    }
    let g0 = nu1.ln() - 0.5 * target;
    let pts = space.quadrature_points();
    let g: Vec<Vec<f64>> = (0..m)
        .map(|l| {
            let s = sigma_g * kl.eigenvalues[l].sqrt();
            pts.iter().map(|&x| s * kl.mode_at(l, x)).collect()
        })
        .collect();
    let mut model = build_lognormal(g0, g, m, 2 * p)?;
    model.nu1 = nu1;
    model.cov = cov;
    model.kernel = KernelParams { sigma_g, ..kl.params };
    model.kl_eigenvalues = kl.eigenvalues[..m].iter().map(|l| l * sigma_g * sigma_g).collect();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::PressureSpace;
    use crate::mesh::build_obstacle_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn space() -> MixedSpace {
        MixedSpace::new(build_obstacle_mesh(8.0, true, 2, 2).unwrap(), PressureSpace::Q1).unwrap()
    }

    fn unit_kl(s: &MixedSpace, m: usize) -> KlExpansion {
        let [x0, x1, y0, y1] = s.mesh.bounding_box();
        kl_decompose(
            s,
            &KernelParams {
                sigma_g: 1.0,
                lx: 0.25 * (x1 - x0),
                ly: 0.25 * (y1 - y0),
            },
            m,
        )
        .unwrap()
    }

    #[test]
    fn lognormal_term_count() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let m = build_lognormal_cov(&s, 5e-3, 0.1, &kl, 2, 3, [4.0, 0.0]).unwrap();
        assert_eq!(m.n_nu(), 28);
        assert_eq!(m.basis.len(), crate::viscosity::gpc::n_terms(2, 6));
    }

    #[test]
    fn lognormal_without_fluctuation_is_deterministic() {
        let n = 5;
        let m = build_lognormal(-2.0, vec![vec![0.0; n]; 2], 2, 4).unwrap();
        let v = m.values(&[0.7, -1.1]).unwrap();
        assert!(v.iter().all(|x| (x - (-2.0f64).exp()).abs() < 1e-15));
    }

    #[test]
    fn lognormal_mean_term_is_exact_mean() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let m = build_lognormal_cov(&s, 5e-3, 0.1, &kl, 2, 3, [4.0, 0.0]).unwrap();
        for k in (0..m.coefficients[0].len()).step_by(97) {
            let exact = (m.g0 + 0.5 * (m.g[0][k].powi(2) + m.g[1][k].powi(2))).exp();
            assert!((m.coefficients[0][k] - exact).abs() <= 1e-10 * exact);
        }
    }

    #[test]
    fn lognormal_expansion_matches_exact_field() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let m = build_lognormal_cov(&s, 5e-3, 0.1, &kl, 2, 3, [4.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let xi: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = m.values(&xi).unwrap();
            let b = m.exact_lognormal(&xi).unwrap();
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs() / y);
            }
        }
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn lognormal_cov_at_probe() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let probe = [4.0, 0.0];
        let m = build_lognormal_cov(&s, 5e-3, 0.1, &kl, 2, 3, probe).unwrap();
        // probe value through the Nystrom extension of the same g_j
        let g: Vec<f64> = (0..2)
            .map(|l| m.kernel.sigma_g * kl.eigenvalues[l].sqrt() * kl.mode_at(l, probe))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let xi: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
                (m.g0 + g[0] * xi[0] + g[1] * xi[1]).exp()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((sd / mean - 0.1).abs() < 0.002, "{}", sd / mean);
        assert!((mean - 5e-3).abs() < 5e-3 * 0.002);
    }

    #[test]
    fn affine_mean_variance_and_cov() {
        let s = space();
        let kl = unit_kl(&s, 3);
        let m = build_affine(&s, 4.5e-3, 0.1, &kl, 3).unwrap();
        assert_eq!(m.n_nu(), 4);
        let v0 = m.values(&[0.0, 0.0, 0.0]).unwrap();
        assert!(v0.iter().all(|v| *v == 4.5e-3));
        // xi = e_1 gives nu_1 + sigma_nu nu_2(x)
        let v1 = m.values(&[1.0, 0.0, 0.0]).unwrap();
        let pts = s.quadrature_points();
        for k in (0..pts.len()).step_by(53) {
            let nu2 = (3.0 * kl.eigenvalues[0]).sqrt() * kl.mode_at(0, pts[k]);
            assert!((v1[k] - (4.5e-3 + 0.1 * 4.5e-3 * nu2)).abs() < 1e-15);
        }
        // variance sigma_nu^2 sum nu_l^2 / 3 against sampling at one point
        let k = 200;
        let var: f64 = (0..3)
            .map(|l| (0.1f64 * 4.5e-3).powi(2) * 3.0 * kl.eigenvalues[l] * kl.mode_at(l, pts[k]).powi(2) / 3.0)
            .sum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let xi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: f64 = m.coefficients.iter().zip(m.basis.eval(&xi)).map(|(c, p)| c[k] * p).sum();
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let sample_var = s2 / n as f64 - mean * mean;
        assert!((mean - 4.5e-3).abs() < 1e-6);
        assert!((sample_var - var).abs() < 0.01 * var, "{sample_var} vs {var}");
        // affine coefficients of degree >= 2 vanish: the basis stops at degree 1
        assert!((0..m.n_nu()).all(|t| m.basis.term_degree(t) <= 1));
    }

    #[test]
    fn affine_cov_at_probe_is_truncated_kl_cov() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let m = build_affine(&s, 4.5e-3, 0.1, &kl, 2).unwrap();
        let pts = s.quadrature_points();
        let k = (0..pts.len())
            .min_by(|&a, &b| {
                let d = |p: [f64; 2]| (p[0] - 4.0).powi(2) + p[1].powi(2);
                d(pts[a]).total_cmp(&d(pts[b]))
            })
            .unwrap();
        let captured: f64 = (0..2).map(|l| kl.eigenvalues[l] * kl.mode_at(l, pts[k]).powi(2)).sum();
        let expected = 0.1 * captured.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let xi: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                m.values(&xi).unwrap()[k]
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((sd / mean - expected).abs() < 0.02 * expected, "{} vs {expected}", sd / mean);
        assert!(captured <= 1.0 + 1e-9);
    }

    #[test]
    fn zero_cov_is_deterministic() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let m = build_affine(&s, 4.5e-3, 0.0, &kl, 2).unwrap();
        assert!(m.values(&[0.9, -0.3]).unwrap().iter().all(|v| *v == 4.5e-3));
    }

    #[test]
    fn positivity_guard() {
        let s = space();
        let kl = unit_kl(&s, 2);
        let m = build_affine(&s, 1.0, 50.0, &kl, 2).unwrap();
        assert!(matches!(m.evaluate(&s, &[1.0, 1.0]), Err(Error::Domain(_))));
    }
}
