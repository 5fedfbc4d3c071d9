//! Linear stability of steady flows: the generalized eigenproblem
//! `J v = lambda M_delta v` and its rightmost eigenvalue.
//!
//! `J = [F, B^T; B, 0]` is the Newton Jacobian on free DOFs and
//! `M_delta = [-G, delta B^T; delta B, 0]` the shifted mass matrix, which
//! maps the infinite eigenvalues of the singular pencil to `1 / delta`.

use faer::c64;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assemble_velocity_mass;
use crate::linalg::{BlockAssembler, ComplexSparseLu, SparseLu, SparseMatrix};
use crate::ns::{FlowState, NavierStokes, StepKind};

pub const DEFAULT_DELTA: f64 = -1e-2;

#[derive(Clone, Debug)]
pub struct EigenProblem {
    pub j: SparseMatrix,
    pub m: SparseMatrix,
    pub delta: f64,
}

impl EigenProblem {
    pub fn new(j: SparseMatrix, m: SparseMatrix, delta: f64) -> Result<Self> {
        if j.nrows() != j.ncols() || m.nrows() != j.nrows() || m.ncols() != j.ncols() {
            return Err(Error::Dimension("pencil matrices must be square and of equal size".into()));
        }
        Ok(Self { j, m, delta })
    }

    pub fn n(&self) -> usize {
        self.j.nrows()
    }

    /// Whether `lambda` lies in the cluster of mapped infinite eigenvalues.
    pub fn is_spurious(&self, lambda: c64) -> bool {
        if self.delta == 0.0 {
            return false;
        }
        let target = 1.0 / self.delta;
        (lambda - c64::new(target, 0.0)).norm() < 0.01 * target.abs()
    }

    /// `||J v - lambda M v|| / ||v||`.
    pub fn residual(&self, lambda: c64, v: &[c64]) -> f64 {
        let jv = self.j.mul_vec_complex(v);
        let mv = self.m.mul_vec_complex(v);
        let r: f64 = jv.iter().zip(&mv).map(|(a, b)| (a - lambda * b).norm_sqr()).sum();
        let nv: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        (r / nv).sqrt()
    }
}

/// Stability pencil at a converged state, with `F = A + N + W` at `state`.
pub fn build_problem(ns: &NavierStokes, state: &FlowState, delta: f64) -> Result<EigenProblem> {
    let space = ns.space;
    let f = ns.linearized_operator(&state.u, StepKind::Newton)?;
    let j = ns.block_system(&f);
    let nf = space.free.len();
    let g = assemble_velocity_mass(space).select(&space.free, &space.free);
    let all_p: Vec<usize> = (0..space.n_p).collect();
    let b_free = ns.b.select(&all_p, &space.free);
    let mut asm = BlockAssembler::new(nf + space.n_p);
    asm.add(&g, 0, 0, -1.0);
    if delta != 0.0 {
        asm.add_transpose(&b_free, 0, nf, delta);
        asm.add(&b_free, nf, 0, delta);
    }
    EigenProblem::new(j, asm.finish(), delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSettings {
    /// Number of eigenvalues nearest each shift to converge.
    pub k: usize,
    /// Shift-invert targets `(re, im)`; results of all shifts are merged.
    pub shifts: Vec<[f64; 2]>,
    pub seed: u64,
    /// Relative Ritz residual tolerance.
    pub tol: f64,
    pub max_restarts: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            k: 24,
            shifts: vec![[0.0, 0.0]],
            seed: 2024,
            tol: 1e-12,
            max_restarts: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub lambda: c64,
    /// Whether the conjugate of `lambda` is also a computed eigenvalue.
    pub paired: bool,
    pub eigenvector: Option<Vec<c64>>,
    /// Converged finite eigenvalues, sorted by decreasing real part.
    pub ritz: Vec<c64>,
    pub k_computed: usize,
    /// `||J v - lambda M v|| / ||v||` of the returned pair.
    pub residual: f64,
    pub seed: u64,
}

impl EigenResult {
    /// Rows `re,im,rightmost`.
    pub fn ritz_csv(&self) -> String {
        let mut out = String::from("re,im,rightmost\n");
        let mut flagged = false;
        for l in &self.ritz {
            let is_right = !flagged && (*l - self.lambda).norm() <= 1e-12 * self.lambda.norm().max(1.0);
            flagged |= is_right;
            out.push_str(&format!("{:.16e},{:.16e},{}\n", l.re, l.im, u8::from(is_right)));
        }
        out
    }

    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            re: self.lambda.re,
            im: self.lambda.im,
            paired: self.paired,
            k_computed: self.k_computed,
            residual: self.residual,
            seed: self.seed,
        }
    }
}

/// Serializable view of an [`EigenResult`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub re: f64,
    pub im: f64,
    pub paired: bool,
    pub k_computed: usize,
    pub residual: f64,
    pub seed: u64,
}

enum ShiftInvert {
    Real(SparseLu),
    Complex(ComplexSparseLu),
}

impl ShiftInvert {
    fn new(p: &EigenProblem, shift: c64) -> Result<Self> {
        let res = if shift.im == 0.0 {
            let a = if shift.re == 0.0 { p.j.clone() } else { p.j.lin_comb(1.0, &p.m, -shift.re) };
            SparseLu::factor(&a).map(ShiftInvert::Real)
        } else {
            ComplexSparseLu::factor_shifted(&p.j, &p.m, shift).map(ShiftInvert::Complex)
        };
        res.map_err(|e| Error::Eigen(format!("factorization at shift {shift} failed ({e}); retry with another shift")))
    }

    /// `(J - shift M)^{-1} M x`.
    fn apply(&self, p: &EigenProblem, x: &[c64]) -> Result<Vec<c64>> {
        let mx = p.m.mul_vec_complex(x);
        match self {
            ShiftInvert::Real(lu) => lu.solve_complex(&mx),
            ShiftInvert::Complex(lu) => lu.solve(&mx),
        }
        .map_err(|e| Error::Eigen(format!("shift-invert solve failed: {e}")))
    }
}

fn cdot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).fold(c64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

fn cnorm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenpairs of a small dense complex matrix, eigenvectors normalized.
fn dense_eig(h: &[Vec<c64>]) -> Result<(Vec<c64>, Vec<Vec<c64>>)> {
    let m = h.len();
    let mat = Mat::<c64>::from_fn(m, m, |i, j| h[i][j]);
    let evd = mat
        .eigen()
        .map_err(|e| Error::Eigen(format!("projected eigenproblem failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let vals = (0..m).map(|i| s[i]).collect();
    let vecs = (0..m)
        .map(|c| {
            let v: Vec<c64> = (0..m).map(|r| u[(r, c)]).collect();
            let nv = cnorm(&v);
            v.into_iter().map(|x| x / nv).collect()
        })
        .collect();
    Ok((vals, vecs))
}

struct KrylovOutcome {
    /// Converged `(lambda, eigenvector)` pairs, nearest the shift first.
    pairs: Vec<(c64, Vec<c64>)>,
}

/// Krylov-Schur iteration on `(J - shift M)^{-1} M` in complex arithmetic.
///
/// The basis is restarted by orthonormalizing the wanted Ritz vectors of the
/// projected matrix, which keeps a valid Krylov decomposition
/// `Op V = V H + v b^*`.
fn krylov_schur(p: &EigenProblem, shift: c64, k: usize, settings: &EigenSettings) -> Result<KrylovOutcome> {
    let n = p.n();
    let op = ShiftInvert::new(p, shift)?;
    let k = k.min(n);
    let m = (2 * k + 10).max(k + 16).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut v0: Vec<c64> = (0..n).map(|_| c64::new(rng.random::<f64>() - 0.5, 0.0)).collect();
    let nv = cnorm(&v0);
    v0.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<c64>> = vec![v0];
    // h[i][j] for i < m + 1 rows, j < m columns
    let mut h: Vec<Vec<c64>> = vec![vec![c64::new(0.0, 0.0); m]; m + 1];
    let mut kept = 0usize;
    let mut last_residuals = Vec::new();

    for _restart in 0..=settings.max_restarts {
        let mut size = m;
        let mut breakdown = false;
        for j in kept..m {
            let mut w = op.apply(p, &basis[j])?;
            let w_norm0 = cnorm(&w);
            for _pass in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let c = cdot(vi, &w);
                    h[i][j] += c;
                    w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
                }
            }
            let beta = cnorm(&w);
            if beta <= 1e-13 * w_norm0.max(f64::MIN_POSITIVE) || j + 1 == n {
                size = j + 1;
                breakdown = true;
                for row in h.iter_mut().skip(size) {
                    row.iter_mut().for_each(|x| *x = c64::new(0.0, 0.0));
                }
                break;
            }
            h[j + 1][j] = c64::new(beta, 0.0);
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(w);
        }

        let hm: Vec<Vec<c64>> = (0..size).map(|i| h[i][..size].to_vec()).collect();
        let (mu, y) = dense_eig(&hm)?;
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| mu[b].norm().total_cmp(&mu[a].norm()));
        let b_row: Vec<c64> = if breakdown { vec![c64::new(0.0, 0.0); size] } else { h[size][..size].to_vec() };
        let resid = |i: usize| -> f64 {
            let r = b_row.iter().zip(&y[i]).fold(c64::new(0.0, 0.0), |acc, (b, yi)| acc + b * yi).norm();
            r / mu[i].norm().max(f64::MIN_POSITIVE)
        };
        // an exhausted space yields the whole spectrum exactly
        let want = if breakdown && size == n { size } else { k.min(size) };
        last_residuals = order[..want].iter().map(|&i| resid(i)).collect();
        let converged = last_residuals.iter().all(|&r| r <= settings.tol);

        if converged || breakdown {
            let pairs = order[..want]
                .iter()
                .filter(|&&i| mu[i].norm() > 0.0 && resid(i) <= settings.tol.max(1e-10))
                .map(|&i| {
                    let mut x = vec![c64::new(0.0, 0.0); n];
                    for (c, vc) in basis.iter().take(size).enumerate() {
                        let coef = y[i][c];
                        x.iter_mut().zip(vc).for_each(|(a, b)| *a += coef * b);
                    }
                    (shift + mu[i].inv(), x)
                })
                .collect();
            return Ok(KrylovOutcome { pairs });
        }

        // keep the wanted Ritz vectors plus a buffer of the next nearest
        let keep = (k + (m - k) / 3).min(m - 1).max(1);
        let mut q: Vec<Vec<c64>> = Vec::with_capacity(keep);
        for &i in order.iter().take(keep) {
            let mut v = y[i].clone();
            for _pass in 0..2 {
                for qc in &q {
                    let c = cdot(qc, &v);
                    v.iter_mut().zip(qc).for_each(|(a, b)| *a -= c * b);
                }
            }
            let nv = cnorm(&v);
            if nv > 1e-10 {
                v.iter_mut().for_each(|x| *x /= nv);
                q.push(v);
            }
        }
        let p_new = q.len();
        let new_basis: Vec<Vec<c64>> = q
            .iter()
            .map(|qc| {
                let mut x = vec![c64::new(0.0, 0.0); n];
                for (c, vc) in basis.iter().take(size).enumerate() {
                    x.iter_mut().zip(vc).for_each(|(a, b)| *a += qc[c] * b);
                }
                x
            })
            .collect();
        let hq: Vec<Vec<c64>> = (0..size)
            .map(|r| (0..p_new).map(|c| (0..size).fold(c64::new(0.0, 0.0), |acc, t| acc + hm[r][t] * q[c][t])).collect())
            .collect();
        let mut h_new = vec![vec![c64::new(0.0, 0.0); m]; m + 1];
        for a in 0..p_new {
            for c in 0..p_new {
                h_new[a][c] = (0..size).fold(c64::new(0.0, 0.0), |acc, t| acc + q[a][t].conj() * hq[t][c]);
            }
        }
        for c in 0..p_new {
            h_new[p_new][c] = (0..size).fold(c64::new(0.0, 0.0), |acc, t| acc + b_row[t] * q[c][t]);
        }
        let next = basis.pop().expect("basis has m + 1 vectors");
        basis = new_basis;
        basis.push(next);
        h = h_new;
        kept = p_new;
    }
    Err(Error::Eigen(format!(
        "Krylov-Schur did not converge in {} restarts; relative Ritz residuals {:?}",
        settings.max_restarts, last_residuals
    )))
}

fn finish(p: &EigenProblem, mut pairs: Vec<(c64, Vec<c64>)>, k_computed: usize, seed: u64) -> Result<EigenResult> {
    pairs.retain(|(l, _)| l.re.is_finite() && l.im.is_finite() && !p.is_spurious(*l));
    if pairs.is_empty() {
        return Err(Error::Eigen("no finite eigenvalues converged outside the 1/delta cluster".into()));
    }
    pairs.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    let ritz: Vec<c64> = pairs.iter().map(|(l, _)| *l).collect();
    let (lambda, v) = pairs.swap_remove(0);
    let scale = lambda.norm().max(1.0);
    let paired = lambda.im.abs() > 1e-8 * scale
        && ritz[1..].iter().any(|l| (*l - lambda.conj()).norm() <= 1e-8 * scale);
    let (lambda, v) = if lambda.im < 0.0 && paired {
        (lambda.conj(), v.iter().map(|x| x.conj()).collect())
    } else {
        (lambda, v)
    };
    let residual = p.residual(lambda, &v);
    Ok(EigenResult {
        lambda,
        paired,
        eigenvector: Some(v),
        ritz,
        k_computed,
        residual,
        seed,
    })
}

/// Converged eigenpairs nearest one shift. If the rightmost of them sits on
/// the outer edge of the converged set the run is repeated once with `2k`.
fn pairs_near(problem: &EigenProblem, shift: c64, settings: &EigenSettings) -> Result<Vec<(c64, Vec<c64>)>> {
    let mut k = settings.k;
    loop {
        let out = krylov_schur(problem, shift, k, settings)?;
        let count = out.pairs.len();
        let radius = out.pairs.iter().map(|(l, _)| (*l - shift).norm()).fold(0.0, f64::max);
        let right = out
            .pairs
            .iter()
            .filter(|(l, _)| !problem.is_spurious(*l))
            .map(|(l, _)| *l)
            .max_by(|a, b| a.re.total_cmp(&b.re));
        let on_edge = right.is_some_and(|l| (l - shift).norm() >= radius * (1.0 - 1e-6));
        if on_edge && k == settings.k && 2 * k <= problem.n() && count >= k {
            k *= 2;
            continue;
        }
        return Ok(out.pairs);
    }
}

/// Rightmost converged eigenvalue among the `k` nearest each shift.
///
/// Pencils are real, so eigenpairs found near a complex shift are completed
/// with their conjugates.
pub fn rightmost(problem: &EigenProblem, settings: &EigenSettings) -> Result<EigenResult> {
    if settings.k < 2 {
        return Err(Error::Parameter("k must be at least 2".into()));
    }
    if settings.shifts.is_empty() {
        return Err(Error::Parameter("at least one shift is required".into()));
    }
    let mut all: Vec<(c64, Vec<c64>)> = Vec::new();
    for s in &settings.shifts {
        let shift = c64::new(s[0], s[1]);
        for (l, v) in pairs_near(problem, shift, settings)? {
            let mut add = vec![(l, v)];
            if shift.im != 0.0 && l.im.abs() > 1e-12 * l.norm().max(1.0) {
                let conj = (l.conj(), add[0].1.iter().map(|x| x.conj()).collect());
                add.push(conj);
            }
            for (l, v) in add {
                if !all.iter().any(|(m, _)| (*m - l).norm() <= 1e-9 * l.norm().max(1.0)) {
                    all.push((l, v));
                }
            }
        }
    }
    let count = all.len();
    finish(problem, all, count, settings.seed)
}

/// Full QZ spectrum of the pencil, spurious and infinite values removed.
pub fn dense_spectrum(problem: &EigenProblem) -> Result<Vec<(c64, Vec<c64>)>> {
    // complex QZ: the real double-shift path in faer trips an index underflow
    // on some saddle-point pencils, and its eigenvalue-only path returns wrong
    // values on some random pencils
    let n = problem.n();
    let (ja, mb) = (problem.j.to_faer_dense(), problem.m.to_faer_dense());
    let a = Mat::<c64>::from_fn(n, n, |i, j| c64::new(ja[(i, j)], 0.0));
    let b = Mat::<c64>::from_fn(n, n, |i, j| c64::new(mb[(i, j)], 0.0));
    let ge = a
        .generalized_eigen(&b)
        .map_err(|e| Error::Eigen(format!("QZ failed: {e:?}")))?;
    let (sa, sb, u) = (ge.S_a(), ge.S_b(), ge.U());
    let scale = problem.j.max_abs().max(problem.m.max_abs());
    let mut out = Vec::new();
    for i in 0..n {
        let (alpha, beta) = (sa[i], sb[i]);
        if beta.norm() <= 1e-13 * scale {
            continue;
        }
        let l = alpha / beta;
        if problem.is_spurious(l) {
            continue;
        }
        out.push((l, (0..n).map(|r| u[(r, i)]).collect()));
    }
    Ok(out)
}

/// Rightmost eigenvalue by dense QZ; intended as an oracle for small pencils.
pub fn dense_rightmost(problem: &EigenProblem) -> Result<EigenResult> {
    if problem.n() > 400 {
        return Err(Error::Parameter(format!("dense oracle limited to n <= 400, got {}", problem.n())));
    }
    let pairs = dense_spectrum(problem)?;
    let count = pairs.len();
    finish(problem, pairs, count, 0)
}
