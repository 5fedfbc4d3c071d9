//! One-dimensional Gauss rules and Smolyak sparse grids.
//!
//! All rules are normalized to probability measures: the standard normal
//! density for Gauss–Hermite and the uniform density on (-1, 1) for
//! Gauss–Legendre, so weights always sum to one.

use std::collections::HashMap;
use std::fmt::Write as _;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of a 1D rule and of the matching orthonormal polynomial basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Standard normal measure, probabilists' Hermite polynomials.
    Hermite,
    /// Uniform measure on (-1, 1), Legendre polynomials.
    Legendre,
}

/// Nodes and weights of a 1D Gauss rule of the given order (number of nodes).
///
/// Computed by the Golub–Welsch eigenvalue method on the Jacobi matrix of the
/// three-term recurrence, then symmetrized so that the node set is exactly
/// closed under negation.
pub fn gauss_1d(family: Family, order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::Parameter("quadrature order must be at least 1".into()));
    }
    let n = order;
    let mut jacobi = Mat::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = match family {
            Family::Hermite => kf.sqrt(),
            Family::Legendre => kf / (4.0 * kf * kf - 1.0).sqrt(),
        };
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let evd = jacobi
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Parameter(format!("Golub-Welsch eigensolve failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|k| (s[k], u[(0, k)] * u[(0, k)])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// Smolyak sparse grid built by the combination technique from non-nested
/// Gauss rules with linear growth (1D order equals the level index).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseGrid {
    pub dim: usize,
    pub level: usize,
    pub family: Family,
    /// One row per node.
    pub nodes: Vec<Vec<f64>>,
    /// Combination weights; may be negative.
    pub weights: Vec<f64>,
}

impl SparseGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature of `f` against the probability measure.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// CSV export, one node per row with a trailing weight column.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = (1..=self.dim).map(|j| format!("xi{j}")).collect();
        let _ = writeln!(s, "{},weight", header.join(","));
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(s, "{},{w:.17e}", row.join(","));
        }
        s
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn multi_indices(dim: usize, min_sum: usize, max_sum: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, prefix: &mut Vec<usize>, sum: usize, min_sum: usize, max_sum: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim {
            if sum >= min_sum {
                out.push(prefix.clone());
            }
            return;
        }
        let remaining = dim - prefix.len() - 1;
        let mut k = 1;
        while sum + k + remaining <= max_sum {
            prefix.push(k);
            rec(dim, prefix, sum + k, min_sum, max_sum, out);
            prefix.pop();
            k += 1;
        }
    }
    let mut out = Vec::new();
    rec(dim, &mut Vec::new(), 0, min_sum, max_sum, &mut out);
    out
}

fn node_key(x: &[f64]) -> Vec<u64> {
    x.iter()
        .map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() })
        .collect()
}

/// Builds the level-`level` Smolyak grid in `dim` dimensions.
///
/// Nodes shared by several tensor terms are merged (their combination
/// weights summed) and returned in lexicographic order.
pub fn smolyak(dim: usize, level: usize, family: Family) -> Result<SparseGrid> {
    if dim == 0 {
        return Err(Error::Parameter("sparse grid dimension must be at least 1".into()));
    }
    if level == 0 {
        return Err(Error::Parameter("sparse grid level must be at least 1".into()));
    }
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..=level)
        .map(|o| gauss_1d(family, o))
        .collect::<Result<_>>()?;

    let q = level + dim - 1;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut nodes: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();

    for idx in multi_indices(dim, level, q) {
        let s: usize = idx.iter().sum();
        let k = q - s;
        let coef = if k % 2 == 0 { 1.0 } else { -1.0 } * binomial(dim - 1, k);
        // Tensor product enumeration.
        let sizes: Vec<usize> = idx.iter().map(|&o| o).collect();
        let total: usize = sizes.iter().product();
        let mut counter = vec![0usize; dim];
        for _ in 0..total {
            let x: Vec<f64> = (0..dim).map(|j| rules[idx[j] - 1].0[counter[j]]).collect();
            let w: f64 = (0..dim).map(|j| rules[idx[j] - 1].1[counter[j]]).product();
            let key = node_key(&x);
            match index.get(&key) {
                Some(&p) => weights[p] += coef * w,
                None => {
                    index.insert(key, nodes.len());
                    nodes.push(x);
                    weights.push(coef * w);
                }
            }
            for j in (0..dim).rev() {
                counter[j] += 1;
                if counter[j] < sizes[j] {
                    break;
                }
                counter[j] = 0;
            }
        }
    }

    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        nodes[a]
            .iter()
            .zip(&nodes[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let nodes: Vec<Vec<f64>> = order.iter().map(|&i| nodes[i].clone()).collect();
    let weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    Ok(SparseGrid {
        dim,
        level,
        family,
        nodes,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_order_one() {
        let (x, w) = gauss_1d(Family::Hermite, 1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn legendre_second_moment() {
        let (x, w) = gauss_1d(Family::Legendre, 2).unwrap();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hermite_eighth_moment() {
        // E[xi^8] = 7!! = 105 for a standard normal.
        let (x, w) = gauss_1d(Family::Hermite, 5).unwrap();
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 105.0).abs() < 1e-12, "{m8}");
    }

    #[test]
    fn exactness_up_to_degree_2n_minus_1() {
        for family in [Family::Hermite, Family::Legendre] {
            for n in 1..=8 {
                let (x, w) = gauss_1d(family, n).unwrap();
                for deg in 0..2 * n {
                    let exact = match family {
                        Family::Hermite if deg % 2 == 0 => (1..deg).step_by(2).map(|k| k as f64).product(),
                        Family::Legendre if deg % 2 == 0 => 1.0 / (deg as f64 + 1.0),
                        _ => 0.0,
                    };
                    let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                    let scale: f64 = x.iter().zip(&w).map(|(x, w)| (w * x.powi(deg as i32)).abs()).sum();
                    assert!((got - exact).abs() < 1e-12 * scale.max(1.0), "{family:?} n={n} deg={deg}");
                }
            }
        }
    }

    #[test]
    fn smolyak_counts() {
        let counts: Vec<usize> = (1..=5)
            .map(|d| smolyak(d, 4, Family::Hermite).unwrap().len())
            .collect();
        assert_eq!(counts, vec![4, 29, 69, 137, 241]);
        let counts: Vec<usize> = (1..=5)
            .map(|d| smolyak(d, 4, Family::Legendre).unwrap().len())
            .collect();
        assert_eq!(counts, vec![4, 29, 69, 137, 241]);
    }

    #[test]
    fn one_dimensional_grid_is_highest_rule() {
        let g = smolyak(1, 4, Family::Legendre).unwrap();
        let (x, w) = gauss_1d(Family::Legendre, 4).unwrap();
        let gx: Vec<f64> = g.nodes.iter().map(|n| n[0]).collect();
        for (a, b) in gx.iter().zip(&x) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in g.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_one_and_grid_is_symmetric() {
        for d in 1..=4 {
            let g = smolyak(d, 4, Family::Hermite).unwrap();
            let s: f64 = g.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for (x, w) in g.nodes.iter().zip(&g.weights) {
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let j = g
                    .nodes
                    .iter()
                    .position(|y| y.iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-12))
                    .expect("mirror node");
                assert!((g.weights[j] - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integrate_constant_and_product_moments() {
        let g = smolyak(2, 4, Family::Hermite).unwrap();
        assert!((g.integrate(|_| 3.5) - 3.5).abs() < 1e-13);
        let m = g.integrate(|x| x[0] * x[0] * x[1] * x[1]);
        assert!((m - 1.0).abs() < 1e-12, "{m}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = smolyak(2, 2, Family::Legendre).unwrap();
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "xi1,xi2,weight");
        assert_eq!(lines.len(), g.len() + 1);
    }
}
