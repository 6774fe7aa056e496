//! Sparse linear solvers: direct LU and Cholesky through `faer`, and
//! ILU(0)-preconditioned BiCGSTAB for systems too large to factor.

use faer::prelude::*;
use faer::sparse::{SparseRowMat, SymbolicSparseRowMat};
use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Systems with more unknowns than this go to the iterative solver.
pub const DIRECT_LIMIT: usize = 20_000;
/// Systems with more stored entries than this also go to the iterative
/// solver; LU fill on near-dense kernels exhausts memory long before the
/// unknown count matters.
pub const DIRECT_NNZ_LIMIT: usize = 4_000_000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Trivial,
    SparseLu,
    SparseCholesky,
    BicgstabIlu0,
}

impl SolverKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Trivial => "trivial",
            Self::SparseLu => "sparse-lu",
            Self::SparseCholesky => "sparse-cholesky",
            Self::BicgstabIlu0 => "bicgstab-ilu0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub direct_limit: usize,
    pub direct_nnz_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            direct_limit: DIRECT_LIMIT,
            direct_nnz_limit: DIRECT_NNZ_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    /// ‖Ax − b‖₂ / ‖b‖₂ (or ‖Ax‖₂ when b = 0).
    pub residual: f64,
    pub iterations: usize,
    pub solver: SolverKind,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.nrows()];
    a.matvec_into(x, &mut ax);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm(b);
    if nb > 0.0 {
        norm(&r) / nb
    } else {
        norm(&r)
    }
}

fn check_square(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    Ok(())
}

fn to_faer(a: &CsrMatrix) -> SparseRowMat<usize, f64> {
    let row_ptr = a.row_ptr().to_vec();
    let cols: Vec<usize> = a.col_indices().iter().map(|&c| c as usize).collect();
    let sym = SymbolicSparseRowMat::new_checked(a.nrows(), a.ncols(), row_ptr, None, cols);
    SparseRowMat::new(sym, a.values().to_vec())
}

fn finish(a: &CsrMatrix, b: &[f64], x: Vec<f64>, iterations: usize, solver: SolverKind, tol: f64) -> Result<SolveOutcome> {
    let residual = relative_residual(a, &x, b);
    if !(residual <= tol) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence {
            residual,
            iterations,
        });
    }
    Ok(SolveOutcome {
        x,
        residual,
        iterations,
        solver,
    })
}

/// Solves `a x = b`, directly up to `direct_limit` unknowns and
/// `direct_nnz_limit` entries, iteratively above.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<SolveOutcome> {
    check_square(a, b)?;
    if a.nrows() == 0 {
        return Ok(SolveOutcome {
            x: Vec::new(),
            residual: 0.0,
            iterations: 0,
            solver: SolverKind::Trivial,
        });
    }
    if a.nrows() <= opts.direct_limit && a.nnz() <= opts.direct_nnz_limit {
        solve_lu(a, b, opts.tol)
    } else {
        bicgstab_ilu0(a, b, None, opts)
    }
}

/// Sparse LU with partial pivoting, followed by up to three steps of
/// iterative refinement when the first residual misses `tol`.
pub fn solve_lu(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<SolveOutcome> {
    check_square(a, b)?;
    let n = a.nrows();
    let lu = to_faer(a)
        .sp_lu()
        .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
    let rhs = Col::<f64>::from_fn(n, |i| b[i]);
    let sol = lu.solve(&rhs);
    let mut x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("LU solve produced non-finite values".into()));
    }
    let mut steps = 1;
    while relative_residual(a, &x, b) > tol && steps < 4 {
        let mut ax = vec![0.0; n];
        a.matvec_into(&x, &mut ax);
        let r = Col::<f64>::from_fn(n, |i| b[i] - ax[i]);
        let d = lu.solve(&r);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += d[i];
        }
        steps += 1;
    }
    finish(a, b, x, steps, SolverKind::SparseLu, tol)
}

/// Sparse Cholesky for a symmetric positive definite `a`; only the lower
/// triangle is read.
pub fn solve_cholesky(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<SolveOutcome> {
    check_square(a, b)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SolveOutcome {
            x: Vec::new(),
            residual: 0.0,
            iterations: 0,
            solver: SolverKind::Trivial,
        });
    }
    let llt = to_faer(a)
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Singular(format!("sparse Cholesky failed: {e:?}")))?;
    let rhs = Col::<f64>::from_fn(n, |i| b[i]);
    let sol = llt.solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    finish(a, b, x, 1, SolverKind::SparseCholesky, tol)
}

/// Incomplete LU factorization with the sparsity pattern of `a`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let row_ptr = a.row_ptr().to_vec();
        let cols = a.col_indices().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if cols[k] as usize == i {
                    diag_pos[i] = k;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::Singular(format!("row {i} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        let vals = lu.values_mut();
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for k in start..end {
                pos[cols[k] as usize] = k;
            }
            for kk in start..end {
                let k = cols[kk] as usize;
                if k >= i {
                    break;
                }
                let pivot = vals[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::Singular(format!("zero pivot in row {k}")));
                }
                let lik = vals[kk] / pivot;
                vals[kk] = lik;
                for jj in diag_pos[k] + 1..row_ptr[k + 1] {
                    let p = pos[cols[jj] as usize];
                    if p != usize::MAX {
                        vals[p] -= lik * vals[jj];
                    }
                }
            }
            for k in start..end {
                pos[cols[k] as usize] = usize::MAX;
            }
            if vals[diag_pos[i]] == 0.0 {
                return Err(Error::Singular(format!("zero pivot in row {i}")));
            }
        }
        Ok(Self { lu, diag_pos })
    }

    /// Overwrites `x` with (LU)⁻¹x.
    pub fn apply_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let rp = self.lu.row_ptr();
        let c = self.lu.col_indices();
        let v = self.lu.values();
        for i in 0..n {
            let mut s = x[i];
            for k in rp[i]..self.diag_pos[i] {
                s -= v[k] * x[c[k] as usize];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag_pos[i] + 1..rp[i + 1] {
                s -= v[k] * x[c[k] as usize];
            }
            x[i] = s / v[self.diag_pos[i]];
        }
    }
}

/// Right-preconditioned BiCGSTAB with ILU(0).
pub fn bicgstab_ilu0(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    check_square(a, b)?;
    let n = a.nrows();
    let pre = Ilu0::new(a)?;
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return finish(a, b, vec![0.0; n], 0, SolverKind::BicgstabIlu0, opts.tol);
    }
    let mut r = vec![0.0; n];
    a.matvec_into(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if norm(&r) / bnorm <= opts.tol {
            break;
        }
        iterations += 1;
        let mut rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            // Breakdown: restart the shadow residual.
            r_hat.copy_from_slice(&r);
            p.fill(0.0);
            v.fill(0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            rho_new = dot(&r_hat, &r);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        p_hat.copy_from_slice(&p);
        pre.apply_in_place(&mut p_hat);
        a.matvec_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= opts.tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            r.copy_from_slice(&s);
            break;
        }
        s_hat.copy_from_slice(&s);
        pre.apply_in_place(&mut s_hat);
        a.matvec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            break;
        }
    }
    finish(a, b, x, iterations, SolverKind::BicgstabIlu0, opts.tol)
}
