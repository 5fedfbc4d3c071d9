//! Karhunen-Loeve decomposition of the separable exponential covariance.
//!
//! The covariance operator is discretized by a Nystrom method on the mesh
//! vertices with lumped bilinear mass weights; modes are then extended to
//! arbitrary points by Nystrom interpolation.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::reference::CORNERS;
use crate::fem::MixedSpace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub sigma_g: f64,
    pub lx: f64,
    pub ly: f64,
}

/// `sigma_g^2 exp(-|x2 - x1| / lx - |y2 - y1| / ly)`.
pub fn covariance_kernel(x1: [f64; 2], x2: [f64; 2], params: &KernelParams) -> f64 {
    let ex = if params.lx.is_infinite() { 0.0 } else { (x2[0] - x1[0]).abs() / params.lx };
    let ey = if params.ly.is_infinite() { 0.0 } else { (x2[1] - x1[1]).abs() / params.ly };
    params.sigma_g * params.sigma_g * (-ex - ey).exp()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KlExpansion {
    pub params: KernelParams,
    /// Nonincreasing eigenvalues of the discretized covariance operator.
    pub eigenvalues: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// `modes[l][i]`: mode `l` at point `i`, normalized so that
    /// `sum_i weights[i] modes[l][i]^2 = 1`.
    pub modes: Vec<Vec<f64>>,
}

impl KlExpansion {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Nystrom extension `v_l(x) = sum_i w_i C(x, x_i) v_l(x_i) / lambda_l`.
    pub fn mode_at(&self, l: usize, x: [f64; 2]) -> f64 {
        let s: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .zip(&self.modes[l])
            .map(|((p, w), v)| w * covariance_kernel(x, *p, &self.params) * v)
            .sum();
        s / self.eigenvalues[l]
    }

    /// Modes evaluated at many points, `out[l][k]`.
    pub fn modes_at(&self, xs: &[[f64; 2]]) -> Vec<Vec<f64>> {
        (0..self.n_modes()).map(|l| xs.iter().map(|&x| self.mode_at(l, x)).collect()).collect()
    }

    /// Same modes with the kernel variance rescaled to `sigma_g^2`.
    pub fn with_sigma(&self, sigma_g: f64) -> Self {
        let r = (sigma_g / self.params.sigma_g).powi(2);
        Self {
            params: KernelParams { sigma_g, ..self.params },
            eigenvalues: self.eigenvalues.iter().map(|l| l * r).collect(),
            ..self.clone()
        }
    }
}

/// Vertices of the mesh and their lumped bilinear mass.
pub fn vertex_quadrature(space: &MixedSpace) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mesh = &space.mesh;
    let mut index = vec![usize::MAX; mesh.n_nodes()];
    let mut points = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (el, e) in mesh.elements.iter().enumerate() {
        let g = &space.geometry[el];
        for (c, &local) in CORNERS.iter().enumerate() {
            let node = e[local];
            if index[node] == usize::MAX {
                index[node] = points.len();
                points.push(mesh.nodes[node]);
                weights.push(0.0);
            }
            let lumped: f64 = (0..9).map(|q| g.wdet[q] * space.reference.corner_phi(q)[c]).sum();
            weights[index[node]] += lumped;
        }
    }
    (points, weights)
}

/// Leading `m` eigenpairs of the weighted Nystrom matrix
/// `W^{1/2} C W^{1/2}` on the given points.
pub fn nystrom(points: &[[f64; 2]], weights: &[f64], params: &KernelParams, m: usize) -> Result<KlExpansion> {
    let n = points.len();
    if m == 0 {
        return Err(Error::Parameter("at least one KL mode is required".into()));
    }
    if m > n {
        return Err(Error::Rank(format!("{m} modes requested from {n} points")));
    }
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let k = Mat::<f64>::from_fn(n, n, |i, j| sw[i] * covariance_kernel(points[i], points[j], params) * sw[j]);
    let evd = k
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Rank(format!("covariance eigensolve failed: {e:?}")))?;
    let (s, u) = (evd.S(), evd.U());
    let top = s[n - 1];
    let mut eigenvalues = Vec::with_capacity(m);
    let mut modes = Vec::with_capacity(m);
    for l in 0..m {
        let col = n - 1 - l;
        let lam = s[col];
        if !(lam > 1e-12 * top) {
            return Err(Error::Rank(format!(
                "mode {} has eigenvalue {lam:e}, below the numerically positive spectrum",
                l + 1
            )));
        }
        // fix the sign so that the mode has a positive weighted mean or, for
        // odd modes, a positive first nonzero entry
        let mut v: Vec<f64> = (0..n).map(|i| u[(i, col)] / sw[i]).collect();
        let mean: f64 = v.iter().zip(weights).map(|(a, w)| a * w).sum();
        let sign = if mean.abs() > 1e-10 {
            mean.signum()
        } else {
            v.iter().find(|x| x.abs() > 1e-10).map_or(1.0, |x| x.signum())
        };
        v.iter_mut().for_each(|x| *x *= sign);
        eigenvalues.push(lam);
        modes.push(v);
    }
    Ok(KlExpansion {
        params: *params,
        eigenvalues,
        points: points.to_vec(),
        weights: weights.to_vec(),
        modes,
    })
}

/// Leading `m` KL eigenpairs of the covariance on the mesh.
pub fn kl_decompose(space: &MixedSpace, params: &KernelParams, m: usize) -> Result<KlExpansion> {
    let (points, weights) = vertex_quadrature(space);
    nystrom(&points, &weights, params, m)
}
