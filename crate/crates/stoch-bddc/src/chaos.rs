//! Orthonormal Hermite chaos machinery: graded multi-index sets, univariate
//! polynomial evaluation and Gaussian moments, closed-form lognormal
//! coefficients, and matrix-valued truncated PC expansions.
//!
//! All polynomials are probabilists' Hermite, normalized so that
//! `⟨ψ_i ψ_j⟩ = δ_ij` under the standard normal measure.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Multi-indices `α` with `|α| ≤ d` over `m` variables, graded order (by
/// total degree), lexicographically descending within each grade. Index 0 is
/// the zero multi-index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub degree: usize,
    pub indices: Vec<Vec<u8>>,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `binomial(m + d, d)`, the dimension of the degree-`d` chaos space.
    pub fn expected_len(m: usize, d: usize) -> usize {
        // product form avoids factorial overflow
        let mut num = 1f64;
        for k in 1..=d {
            num *= (m + k) as f64 / k as f64;
        }
        num.round() as usize
    }
}

/// Enumerate the complete graded multi-index set.
pub fn multi_index_set(m: usize, d: usize) -> MultiIndexSet {
    assert!(m >= 1, "need at least one stochastic variable");
    let mut indices = Vec::with_capacity(MultiIndexSet::expected_len(m, d));
    let mut current = vec![0u8; m];
    for total in 0..=d {
        grade_rec(m, total, 0, &mut current, &mut indices);
    }
    debug_assert_eq!(indices.len(), MultiIndexSet::expected_len(m, d));
    MultiIndexSet {
        dim: m,
        degree: d,
        indices,
    }
}

fn grade_rec(m: usize, rem: usize, pos: usize, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos == m - 1 {
        current[pos] = rem as u8;
        out.push(current.clone());
        return;
    }
    for k in (0..=rem).rev() {
        current[pos] = k as u8;
        grade_rec(m, rem - k, pos + 1, current, out);
    }
}

/// Value of the orthonormal probabilists' Hermite polynomial `ψ_k(x)` via the
/// recurrence `ψ_{k+1} = (x ψ_k − √k ψ_{k−1})/√(k+1)`.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    hermite_values(k, x)[k]
}

/// `[ψ_0(x), …, ψ_kmax(x)]`.
pub fn hermite_values(kmax: usize, x: f64) -> Vec<f64> {
    let mut v = vec![0.0; kmax + 1];
    v[0] = 1.0;
    if kmax >= 1 {
        v[1] = x;
    }
    for k in 1..kmax {
        v[k + 1] = (x * v[k] - (k as f64).sqrt() * v[k - 1]) / ((k + 1) as f64).sqrt();
    }
    v
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `⟨ψ_i ψ_j ψ_k⟩` for univariate orthonormal Hermite polynomials:
/// `√(i!j!k!) / ((s−i)!(s−j)!(s−k)!)` when `i+j+k = 2s` is even and the
/// triangle inequalities hold, zero otherwise.
pub fn univariate_triple(i: usize, j: usize, k: usize) -> f64 {
    let total = i + j + k;
    if total % 2 != 0 {
        return 0.0;
    }
    let s = total / 2;
    if s < i || s < j || s < k {
        return 0.0;
    }
    let ln = 0.5 * (ln_factorial(i) + ln_factorial(j) + ln_factorial(k))
        - ln_factorial(s - i)
        - ln_factorial(s - j)
        - ln_factorial(s - k);
    ln.exp()
}

/// `⟨ψ_α ψ_β ψ_γ⟩` as the product of univariate triple products.
pub fn triple_product(alpha: &[u8], beta: &[u8], gamma: &[u8]) -> f64 {
    debug_assert!(alpha.len() == beta.len() && beta.len() == gamma.len());
    let mut v = 1.0;
    for ((&a, &b), &g) in alpha.iter().zip(beta).zip(gamma) {
        v *= univariate_triple(a as usize, b as usize, g as usize);
        if v == 0.0 {
            return 0.0;
        }
    }
    v
}

/// Cached univariate triple products `⟨ψ_i ψ_j ψ_k⟩` for `i, j, k ≤ max_degree`.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    pub max_degree: usize,
    values: Vec<f64>,
}

impl HermiteTable {
    pub fn new(max_degree: usize) -> Self {
        let n = max_degree + 1;
        let mut values = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    values[(i * n + j) * n + k] = univariate_triple(i, j, k);
                }
            }
        }
        Self { max_degree, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.max_degree + 1;
        self.values[(i * n + j) * n + k]
    }

    /// `⟨ψ_α ψ_β ψ_γ⟩` using the cached univariate values.
    pub fn triple(&self, alpha: &[u8], beta: &[u8], gamma: &[u8]) -> f64 {
        let mut v = 1.0;
        for ((&a, &b), &g) in alpha.iter().zip(beta).zip(gamma) {
            v *= self.get(a as usize, b as usize, g as usize);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }
}

/// Closed-form lognormal chaos coefficient `⟨e^{cξ} ψ_k(ξ)⟩ = e^{c²/2} c^k/√(k!)`.
pub fn lognormal_pc_coeff(c: f64, k: usize) -> f64 {
    (0.5 * c * c).exp() * c.powi(k as i32) * (-0.5 * ln_factorial(k)).exp()
}

/// Gauss–Hermite rule for the standard normal weight: `∫ f dN(0,1) ≈ Σ w_q f(x_q)`.
///
/// Computed by Golub–Welsch on the Jacobi matrix of the orthonormal
/// probabilists' Hermite recurrence; exact for polynomials of degree `≤ 2q−1`.
pub fn gauss_hermite(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut j = linalg::zeros(q, q);
    for k in 1..q {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let (mut lambdas, vectors) = linalg::sym_eig(&j, "gauss_hermite").expect("tridiagonal eig");
    // ascending nodes
    lambdas.reverse();
    let mut weights = Vec::with_capacity(q);
    for k in 0..q {
        let col = q - 1 - k;
        let v0 = vectors[(0, col)];
        weights.push(v0 * v0);
    }
    (lambdas, weights)
}

/// A matrix-valued truncated PC expansion `Σ_α A_α ψ_α`.
#[derive(Debug, Clone)]
pub struct PcMatrix {
    pub set: Arc<MultiIndexSet>,
    pub coeffs: Vec<Matrix>,
}

impl PcMatrix {
    pub fn new(set: Arc<MultiIndexSet>, coeffs: Vec<Matrix>) -> Self {
        assert_eq!(set.len(), coeffs.len());
        if let Some(first) = coeffs.first() {
            let shape = (first.nrows(), first.ncols());
            assert!(coeffs.iter().all(|c| (c.nrows(), c.ncols()) == shape));
        }
        Self { set, coeffs }
    }

    pub fn nrows(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.nrows())
    }

    pub fn ncols(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.ncols())
    }

    /// Keep only the coefficients whose multi-index lies in the leading
    /// (lower-degree) set `sub`. Relies on the graded ordering making `sub` a
    /// prefix of `self.set`.
    pub fn truncated(&self, sub: Arc<MultiIndexSet>) -> PcMatrix {
        assert_eq!(sub.dim, self.set.dim);
        assert!(sub.degree <= self.set.degree);
        assert_eq!(
            &self.set.indices[..sub.len()],
            &sub.indices[..],
            "degree-graded prefix mismatch"
        );
        PcMatrix::new(sub.clone(), self.coeffs[..sub.len()].to_vec())
    }

    /// Evaluate `Σ_α A_α ψ_α(ξ̂)`.
    pub fn evaluate(&self, xihat: &[f64]) -> Result<Matrix> {
        if xihat.len() != self.set.dim {
            return Err(Error::DimensionMismatch {
                context: "pc_evaluate coordinates",
                expected: self.set.dim,
                got: xihat.len(),
            });
        }
        let psis = basis_values(&self.set, xihat);
        let mut out = linalg::zeros(self.nrows(), self.ncols());
        for (coeff, &p) in self.coeffs.iter().zip(&psis) {
            if p == 0.0 {
                continue;
            }
            for jj in 0..out.ncols() {
                for ii in 0..out.nrows() {
                    out[(ii, jj)] += p * coeff[(ii, jj)];
                }
            }
        }
        Ok(out)
    }
}

/// `[ψ_α(ξ̂)]` for every `α` in the set.
pub fn basis_values(set: &MultiIndexSet, xihat: &[f64]) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = xihat
        .iter()
        .map(|&x| hermite_values(set.degree, x))
        .collect();
    set.indices
        .iter()
        .map(|alpha| {
            let mut v = 1.0;
            for (l, &a) in alpha.iter().enumerate() {
                v *= tables[l][a as usize];
            }
            v
        })
        .collect()
}
