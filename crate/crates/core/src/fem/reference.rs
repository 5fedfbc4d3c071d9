//! Biquadratic reference element and 3x3 Gauss rule on `[-1, 1]^2`.

use crate::mesh::Mesh;

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// 1D quadratic Lagrange basis on nodes -1, 0, 1 and its derivative.
pub fn lagrange2(s: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)],
        [s - 0.5, -2.0 * s, s + 0.5],
    )
}

/// Bilinear corner basis in tensor order (-1,-1), (1,-1), (-1,1), (1,1).
pub fn bilinear(s: f64, t: f64) -> [f64; 4] {
    let (a0, a1) = (0.5 * (1.0 - s), 0.5 * (1.0 + s));
    let (b0, b1) = (0.5 * (1.0 - t), 0.5 * (1.0 + t));
    [a0 * b0, a1 * b0, a0 * b1, a1 * b1]
}

/// Local node indices of the four element corners, matching [`bilinear`].
pub const CORNERS: [usize; 4] = [0, 2, 6, 8];

#[derive(Clone, Copy, Debug)]
pub struct Jacobian {
    pub det: f64,
    /// Inverse transpose, mapping reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
}

#[derive(Clone, Debug)]
pub struct ReferenceQ2 {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    phi: Vec<[f64; 9]>,
    dphi: Vec<[[f64; 2]; 9]>,
    corner: Vec<[f64; 4]>,
}

impl Default for ReferenceQ2 {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceQ2 {
    pub fn new() -> Self {
        let mut r = Self {
            points: Vec::new(),
            weights: Vec::new(),
            phi: Vec::new(),
            dphi: Vec::new(),
            corner: Vec::new(),
        };
        for &(t, wt) in &GAUSS3 {
            for &(s, ws) in &GAUSS3 {
                let (ls, dls) = lagrange2(s);
                let (lt, dlt) = lagrange2(t);
                let mut phi = [0.0; 9];
                let mut dphi = [[0.0; 2]; 9];
                for j in 0..3 {
                    for i in 0..3 {
                        phi[3 * j + i] = ls[i] * lt[j];
                        dphi[3 * j + i] = [dls[i] * lt[j], ls[i] * dlt[j]];
                    }
                }
                r.points.push([s, t]);
                r.weights.push(ws * wt);
                r.phi.push(phi);
                r.dphi.push(dphi);
                r.corner.push(bilinear(s, t));
            }
        }
        r
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, q: usize) -> [f64; 2] {
        self.points[q]
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn phi(&self, q: usize) -> &[f64; 9] {
        &self.phi[q]
    }

    pub fn dphi(&self, q: usize) -> &[[f64; 2]; 9] {
        &self.dphi[q]
    }

    pub fn corner_phi(&self, q: usize) -> &[f64; 4] {
        &self.corner[q]
    }

    pub fn jacobian(&self, mesh: &Mesh, element: &[usize; 9], q: usize) -> Jacobian {
        let mut j = [[0.0; 2]; 2];
        for (k, &n) in element.iter().enumerate() {
            let x = mesh.nodes[n];
            let d = self.dphi[q][k];
            j[0][0] += x[0] * d[0];
            j[0][1] += x[0] * d[1];
            j[1][0] += x[1] * d[0];
            j[1][1] += x[1] * d[1];
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // (J^{-1})^T for J = d(x, y)/d(s, t)
        let inv_t = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        Jacobian { det, inv_t }
    }

    pub fn map(&self, mesh: &Mesh, element: &[usize; 9], q: usize) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (k, &n) in element.iter().enumerate() {
            x[0] += self.phi[q][k] * mesh.nodes[n][0];
            x[1] += self.phi[q][k] * mesh.nodes[n][1];
        }
        x
    }
}
