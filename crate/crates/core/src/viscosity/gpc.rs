//! Orthonormal generalized polynomial chaos bases of total degree `p`.

use serde::{Deserialize, Serialize};

use crate::quadrature::Family;

/// Number of multivariate polynomials of total degree at most `degree` in
/// `dim` variables, `(dim + degree)! / (dim! degree!)`.
pub fn n_terms(dim: usize, degree: usize) -> usize {
    let (a, b) = (dim.min(degree), dim.max(degree));
    (1..=a).fold(1usize, |acc, i| acc * (b + i) / i)
}

/// Values of the orthonormal 1D polynomials of degree `0..=max_degree` at `x`.
pub fn eval_1d_all(family: Family, max_degree: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree == 0 {
        return out;
    }
    match family {
        Family::Hermite => {
            // He_{n+1} = x He_n - n He_{n-1}; normalized by sqrt(n!).
            let mut prev = 1.0;
            let mut cur = x;
            out.push(cur);
            let mut fact_sqrt = 1.0f64;
            for n in 1..max_degree {
                let next = x * cur - n as f64 * prev;
                prev = cur;
                cur = next;
                fact_sqrt *= ((n + 1) as f64).sqrt();
                out.push(cur / fact_sqrt);
            }
        }
        Family::Legendre => {
            // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}; normalized by sqrt(2n+1).
            let mut prev = 1.0;
            let mut cur = x;
            out.push(cur * 3f64.sqrt());
            for n in 1..max_degree {
                let nf = n as f64;
                let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
                prev = cur;
                cur = next;
                out.push(cur * (2.0 * nf + 3.0).sqrt());
            }
        }
    }
    out
}

/// Orthonormal product basis `psi_k(xi) = prod_j phi_{alpha_kj}(xi_j)`.
///
/// Terms are graded by total degree; within a degree the first variable
/// carries the highest power first. `psi_1` is the constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpcBasis {
    pub family: Family,
    pub dim: usize,
    pub degree: usize,
    pub indices: Vec<Vec<usize>>,
}

fn indices_of_degree(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    if dim == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in indices_of_degree(dim - 1, degree - first) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

impl GpcBasis {
    pub fn new(family: Family, dim: usize, degree: usize) -> Self {
        assert!(dim >= 1, "basis dimension must be at least 1");
        let indices: Vec<Vec<usize>> = (0..=degree).flat_map(|d| indices_of_degree(dim, d)).collect();
        debug_assert_eq!(indices.len(), n_terms(dim, degree));
        Self {
            family,
            dim,
            degree,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// All basis values at `xi`.
    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.dim, "basis evaluated at wrong dimension");
        let tables: Vec<Vec<f64>> = xi.iter().map(|&x| eval_1d_all(self.family, self.degree, x)).collect();
        self.indices
            .iter()
            .map(|alpha| alpha.iter().enumerate().map(|(j, &a)| tables[j][a]).product())
            .collect()
    }

    /// Total degree of term `k`.
    pub fn term_degree(&self, k: usize) -> usize {
        self.indices[k].iter().sum()
    }
}
