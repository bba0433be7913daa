//! Preconditioned conjugate gradients with relative-residual stopping and
//! Lanczos extreme-eigenvalue estimation from the iteration coefficients.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Abstraction over symmetric positive (semi)definite actions.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply_to(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOp for crate::bddc::SchurOperator {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }
}

impl LinearOp for crate::bddc::BddcPreconditioner {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }
}

/// Identity preconditioner (plain CG).
pub struct IdentityOp(pub usize);

impl LinearOp for IdentityOp {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Dense symmetric operator, for small oracle tests.
pub struct DenseOp(pub Matrix);

impl LinearOp for DenseOp {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.0.nrows()];
        linalg::gemv_add(&self.0, x, &mut y);
        y
    }
}

#[derive(Debug, Clone)]
pub struct PcgReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖r_k‖/‖r_0‖` after each iteration.
    pub residual_history: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
    pub solution: Vec<f64>,
}

/// Standard PCG with zero initial guess. Stops when the unpreconditioned
/// relative residual drops below `tol` or after `maxit` iterations. The
/// Lanczos tridiagonal matrix recovered from the `α_k`, `β_k` coefficients
/// provides estimates of the extreme eigenvalues of the preconditioned
/// operator.
pub fn pcg(
    operator: &dyn LinearOp,
    preconditioner: &dyn LinearOp,
    rhs: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<PcgReport> {
    let n = rhs.len();
    assert_eq!(operator.dim(), n);
    assert_eq!(preconditioner.dim(), n);
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let r0 = linalg::norm2(&r);
    if r0 == 0.0 {
        return Ok(PcgReport {
            iterations: 0,
            converged: true,
            residual_history: Vec::new(),
            lambda_min: 1.0,
            lambda_max: 1.0,
            cond: 1.0,
            solution: x,
        });
    }
    let mut z = preconditioner.apply_to(&r);
    let mut rz = linalg::dot(&r, &z);
    if rz <= 0.0 {
        return Err(Error::PcgBreakdown("preconditioner", rz));
    }
    let mut p = z.clone();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..maxit {
        let ap = operator.apply_to(&p);
        let pap = linalg::dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::PcgBreakdown("operator", pap));
        }
        let alpha = rz / pap;
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &ap, &mut r);
        alphas.push(alpha);
        iterations += 1;
        let rel = linalg::norm2(&r) / r0;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        z = preconditioner.apply_to(&r);
        let rz_new = linalg::dot(&r, &z);
        if rz_new <= 0.0 {
            return Err(Error::PcgBreakdown("preconditioner", rz_new));
        }
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for (pk, zk) in p.iter_mut().zip(&z) {
            *pk = zk + beta * *pk;
        }
    }

    let (lambda_min, lambda_max) = lanczos_extremes(&alphas, &betas)?;
    Ok(PcgReport {
        iterations,
        converged,
        residual_history: history,
        lambda_min,
        lambda_max,
        cond: lambda_max / lambda_min,
        solution: x,
    })
}

/// Extreme eigenvalues of the Lanczos tridiagonal built from the PCG
/// coefficients: `T_jj = 1/α_j + β_{j−1}/α_{j−1}`, `T_{j,j+1} = √β_j / α_j`.
fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> Result<(f64, f64)> {
    let k = alphas.len();
    if k == 0 {
        return Ok((1.0, 1.0));
    }
    let mut t = linalg::zeros(k, k);
    for j in 0..k {
        let mut d = 1.0 / alphas[j];
        if j > 0 {
            d += betas[j - 1] / alphas[j - 1];
        }
        t[(j, j)] = d;
        if j + 1 < k {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let (lambdas, _) = linalg::sym_eig(&t, "lanczos tridiagonal")?;
    Ok((lambdas[k - 1], lambdas[0]))
}
