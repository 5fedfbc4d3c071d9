//! Sparse and dense linear-algebra carriers.
//!
//! [`SparseMatrix`] is a plain CSR container used by assembly and by the
//! nonlinear solver. Factorizations are delegated to `faer`'s sparse LU
//! with COLAMD ordering and partial pivoting.

use faer::c64;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Duplicates are summed in input order, so the result is bitwise
    /// reproducible for a fixed triplet sequence.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut trip: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        debug_assert!(trip.iter().all(|&(r, c, _)| r < nrows && c < ncols));
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        Self::from_triplets(
            nrows,
            ncols,
            rows.iter().enumerate().flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, &v)| (i, j, v))
            }),
        )
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |k| (i, self.indices[k], self.values[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.indptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec: length mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `y <- y + alpha * self * x`
    /// `y = A x` for complex `x`.
    pub fn mul_vec_complex(&self, x: &[c64]) -> Vec<c64> {
        (0..self.nrows())
            .map(|i| self.row(i).fold(c64::new(0.0, 0.0), |acc, (j, v)| acc + x[j] * v))
            .collect()
    }

    pub fn mul_vec_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let s: f64 = self.row(i).map(|(j, v)| v * x[j]).sum();
            *yi += alpha * s;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha * self + beta * other`
    pub fn lin_comb(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets()
                .map(|(i, j, v)| (i, j, alpha * v))
                .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v))),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry of `|self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.lin_comb(1.0, other, -1.0).max_abs()
    }

    /// Extracts the submatrix with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let trip = rows.iter().enumerate().flat_map(|(ri, &r)| {
            let col_map = &col_map;
            self.row(r)
                .filter(move |(c, _)| col_map[*c] != usize::MAX)
                .map(move |(c, v)| (ri, col_map[c], v))
        });
        Self::from_triplets(rows.len(), cols.len(), trip.collect::<Vec<_>>())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            out[i][j] += v;
        }
        out
    }

    pub fn to_faer_dense(&self) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            out[(i, j)] += v;
        }
        out
    }
}

/// Block layout helper: assembles `sum_k scale_k * block_k` placed at
/// `(row_offset_k, col_offset_k)` into one square system matrix.
#[derive(Default)]
pub struct BlockAssembler {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl BlockAssembler {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, block: &SparseMatrix, row_off: usize, col_off: usize, scale: f64) -> &mut Self {
        assert!(row_off + block.nrows() <= self.n && col_off + block.ncols() <= self.n);
        if scale != 0.0 {
            self.entries
                .extend(block.triplets().map(|(i, j, v)| (i + row_off, j + col_off, scale * v)));
        }
        self
    }

    pub fn add_transpose(&mut self, block: &SparseMatrix, row_off: usize, col_off: usize, scale: f64) -> &mut Self {
        assert!(row_off + block.ncols() <= self.n && col_off + block.nrows() <= self.n);
        if scale != 0.0 {
            self.entries
                .extend(block.triplets().map(|(i, j, v)| (j + row_off, i + col_off, scale * v)));
        }
        self
    }

    pub fn finish(self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.n, self.n, self.entries)
    }
}

fn to_faer_real(a: &SparseMatrix) -> Result<SparseColMat<usize, f64>> {
    let trip: Vec<_> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &trip)
        .map_err(|e| Error::Singular(format!("sparse matrix creation failed: {e:?}")))
}

/// Real sparse LU factorization.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("LU of {}x{} matrix", a.nrows(), a.ncols())));
        }
        let lu = to_faer_real(a)?
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { n: a.nrows(), lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

impl SparseLu {
    /// Solves with a complex right-hand side using the real factors.
    pub fn solve_complex(&self, b: &[c64]) -> Result<Vec<c64>> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 2, |i, j| if j == 0 { b[i].re } else { b[i].im });
        let x = self.lu.solve(&rhs);
        let out: Vec<c64> = (0..self.n).map(|i| c64::new(x[(i, 0)], x[(i, 1)])).collect();
        if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

/// Complex sparse LU of `real_part + i * imag_part`, used for complex shifts.
pub struct ComplexSparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, c64>,
}

impl ComplexSparseLu {
    /// Factors `a - shift * b` for real `a`, `b` and complex `shift`.
    pub fn factor_shifted(a: &SparseMatrix, b: &SparseMatrix, shift: c64) -> Result<Self> {
        let n = a.nrows();
        let mut trip: Vec<Triplet<usize, usize, c64>> = a
            .triplets()
            .map(|(i, j, v)| Triplet::new(i, j, c64::new(v, 0.0)))
            .collect();
        trip.extend(b.triplets().map(|(i, j, v)| Triplet::new(i, j, -shift * v)));
        let m = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Singular(format!("sparse matrix creation failed: {e:?}")))?;
        let lu = m
            .sp_lu()
            .map_err(|e| Error::Singular(format!("complex sparse LU failed: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, b: &[c64]) -> Result<Vec<c64>> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<c64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<c64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Dense solve with partial pivoting for small systems.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i][j]);
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("dense solve produced non-finite values".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(2, 3, vec![(0, 1, 1.0), (1, 2, 2.0), (0, 1, 0.5)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.get(1, 2), 2.0);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn transpose_and_select() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0, 0.0], vec![0.0, 3.0, 4.0]]);
        let t = a.transpose();
        assert_eq!(t.to_dense(), vec![vec![1.0, 0.0], vec![2.0, 3.0], vec![0.0, 4.0]]);
        let s = a.select(&[1], &[2, 1]);
        assert_eq!(s.to_dense(), vec![vec![4.0, 3.0]]);
    }

    #[test]
    fn lu_solves_small_system() {
        let a = SparseMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 0.0, 2.0],
            vec![0.0, 2.0, 1.0],
        ]);
        let b = vec![1.0, 2.0, 3.0];
        let x = SparseLu::factor(&a).unwrap().solve(&b).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let res = SparseLu::factor(&a).and_then(|lu| lu.solve(&[1.0, 0.0]));
        assert!(res.is_err());
    }

    #[test]
    fn complex_shifted_lu() {
        let a = SparseMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 3.0]]);
        let i = SparseMatrix::identity(2);
        let lu = ComplexSparseLu::factor_shifted(&a, &i, c64::new(0.0, 1.0)).unwrap();
        let x = lu.solve(&[c64::new(1.0, 0.0), c64::new(1.0, 0.0)]).unwrap();
        let expect = c64::new(1.0, 0.0) / c64::new(2.0, -1.0);
        assert!((x[0] - expect).norm() < 1e-14);
    }
}
