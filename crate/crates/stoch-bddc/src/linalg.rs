//! Thin wrappers over `faer` dense kernels.
//!
//! Everything in this library works on small-to-medium dense matrices
//! (subdomain blocks, Kronecker block systems, kernel matrices), so a single
//! dense backend is enough. The wrappers fix the conventions used elsewhere:
//! Cholesky factors are lower-triangular, eigenvalues come back descending.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve;
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = Mat<f64>;

pub fn zeros(nrows: usize, ncols: usize) -> Matrix {
    Mat::zeros(nrows, ncols)
}

pub fn identity(n: usize) -> Matrix {
    Mat::identity(n, n)
}

/// Frobenius norm of the difference `a - b`.
pub fn frob_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            s += d * d;
        }
    }
    s.sqrt()
}

pub fn frob(a: &Matrix) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Largest absolute deviation from symmetry.
pub fn asymmetry(a: &Matrix) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..j {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// Replace `a` with its symmetric part `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut Matrix) {
    assert_eq!(a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Cholesky factorization `A = L·Lᵀ` of a symmetric positive definite matrix.
pub struct Chol {
    factor: faer::linalg::solvers::Llt<f64>,
    dim: usize,
}

impl Chol {
    pub fn new(a: &Matrix, context: &'static str, subdomain: Option<usize>) -> Result<Self> {
        let factor = a
            .llt(Side::Lower)
            .map_err(|_| Error::NotPositiveDefinite { context, subdomain })?;
        Ok(Self {
            factor,
            dim: a.nrows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower Cholesky factor with positive diagonal.
    pub fn lower(&self) -> Matrix {
        self.factor.L().to_owned()
    }

    pub fn solve_mat(&self, rhs: &Matrix) -> Matrix {
        let mut out = rhs.clone();
        self.factor.solve_in_place(out.as_mut());
        out
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = col_from(rhs);
        self.factor.solve_in_place(out.as_mut());
        col_to_vec(&out)
    }

    pub fn solve_vec_in_place(&self, rhs: &mut [f64]) {
        let mut out = col_from(rhs);
        self.factor.solve_in_place(out.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = out[(i, 0)];
        }
    }
}

/// Solve `L x = b` (lower triangular) in place, one right-hand side per column.
pub fn solve_lower_in_place(l: &Matrix, rhs: &mut Matrix) {
    triangular_solve::solve_lower_triangular_in_place(l.as_ref(), rhs.as_mut(), Par::Seq);
}

/// Solve `Lᵀ x = b` in place given the lower factor `L`.
pub fn solve_lower_transpose_in_place(l: &Matrix, rhs: &mut Matrix) {
    triangular_solve::solve_upper_triangular_in_place(
        l.as_ref().transpose(),
        rhs.as_mut(),
        Par::Seq,
    );
}

/// Solve `L Lᵀ x = b` with an explicit lower factor (no refactorization).
pub fn cholesky_solve_with_factor(l: &Matrix, rhs: &mut Matrix) {
    solve_lower_in_place(l, rhs);
    solve_lower_transpose_in_place(l, rhs);
}

/// Symmetric eigendecomposition, eigenvalues descending.
pub fn sym_eig(a: &Matrix, context: &'static str) -> Result<(Vec<f64>, Matrix)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure(context))?;
    let n = a.nrows();
    let mut lambdas = Vec::with_capacity(n);
    let mut vectors = zeros(n, n);
    // faer returns ascending order
    for k in 0..n {
        let src = n - 1 - k;
        lambdas.push(evd.S()[src]);
        for i in 0..n {
            vectors[(i, k)] = evd.U()[(i, src)];
        }
    }
    Ok((lambdas, vectors))
}

/// Symmetric square root `Q·D^{1/2}·Qᵀ` of a positive semidefinite matrix.
///
/// Eigenvalues inside `-tol·λ_max` of zero are clamped; anything more negative
/// is a genuine indefiniteness and is reported as an error.
pub fn sym_sqrt(a: &Matrix, context: &'static str, subdomain: Option<usize>) -> Result<Matrix> {
    let (lambdas, q) = sym_eig(a, context)?;
    let n = a.nrows();
    let lmax = lambdas.first().copied().unwrap_or(0.0).max(0.0);
    let tol = 1e-10 * lmax.max(f64::MIN_POSITIVE);
    let mut sqrt_l = Vec::with_capacity(n);
    for &l in &lambdas {
        if l < -tol {
            return Err(Error::NotPositiveDefinite { context, subdomain });
        }
        sqrt_l.push(l.max(0.0).sqrt());
    }
    let mut h = zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..n {
                s += q[(i, k)] * sqrt_l[k] * q[(j, k)];
            }
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    Ok(h)
}

/// `y += A x` for a slice-backed vector pair.
pub fn gemv_add(a: &Matrix, x: &[f64], y: &mut [f64]) {
    assert_eq!(a.ncols(), x.len());
    assert_eq!(a.nrows(), y.len());
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for i in 0..a.nrows() {
            y[i] += a[(i, j)] * xj;
        }
    }
}

/// `y += Aᵀ x`.
pub fn gemv_transpose_add(a: &Matrix, x: &[f64], y: &mut [f64]) {
    assert_eq!(a.nrows(), x.len());
    assert_eq!(a.ncols(), y.len());
    for j in 0..a.ncols() {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            s += a[(i, j)] * x[i];
        }
        y[j] += s;
    }
}

pub fn col_from(v: &[f64]) -> Matrix {
    let mut out = zeros(v.len(), 1);
    for (i, &x) in v.iter().enumerate() {
        out[(i, 0)] = x;
    }
    out
}

pub fn col_to_vec(m: &Matrix) -> Vec<f64> {
    assert_eq!(m.ncols(), 1);
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
