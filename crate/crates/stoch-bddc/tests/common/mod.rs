//! Dense brute-force reconstructions of the interface operator and the BDDC
//! preconditioner, for oracle comparisons on small meshes. Everything here
//! is built from explicit dense matrices and index bookkeeping, independent
//! of the solver's matrix-free paths.

use stoch_bddc::assembly::{assemble_global, assemble_subdomain, submatrix};
use stoch_bddc::bddc::ScalingWeights;
use stoch_bddc::linalg::{self, Chol};
use stoch_bddc::mesh::Mesh;
use stoch_bddc::partition::DofPartition;
use stoch_bddc::Matrix;

pub struct DenseOracle {
    /// Global interface Schur complement in Γ ordering.
    pub s_gamma: Matrix,
    /// Dense BDDC preconditioner `M⁻¹ = R̃_Dᵀ S̃⁻¹ R̃_D`.
    pub m_inv: Matrix,
    /// Coarse matrix assembled from the per-subdomain contributions.
    pub s_pi: Matrix,
}

fn invert(a: &Matrix) -> Matrix {
    Chol::new(a, "oracle inverse", None)
        .unwrap()
        .solve_mat(&linalg::identity(a.nrows()))
}

pub fn reduce_rhs_dense(
    mesh: &Mesh,
    part: &DofPartition,
    kappa: &[f64],
    f_free: &[f64],
) -> Vec<f64> {
    let a = assemble_global(mesh, kappa).unwrap().dense();
    let (gamma_free, interior_free) = index_sets(mesh, part);
    let a_ii = gather(&a, &interior_free, &interior_free);
    let a_gi = gather(&a, &gamma_free, &interior_free);
    let f_i: Vec<f64> = interior_free.iter().map(|&i| f_free[i]).collect();
    let sol = Chol::new(&a_ii, "oracle", None).unwrap().solve_vec(&f_i);
    let mut g: Vec<f64> = gamma_free.iter().map(|&i| f_free[i]).collect();
    let mut corr = vec![0.0; g.len()];
    linalg::gemv_add(&a_gi, &sol, &mut corr);
    for (gv, c) in g.iter_mut().zip(&corr) {
        *gv -= c;
    }
    g
}

fn index_sets(mesh: &Mesh, part: &DofPartition) -> (Vec<usize>, Vec<usize>) {
    let gamma_nodes: Vec<usize> = part
        .delta_nodes
        .iter()
        .chain(part.pi_nodes.iter())
        .copied()
        .collect();
    let gamma_free: Vec<usize> = gamma_nodes.iter().map(|&nd| mesh.free_index[nd]).collect();
    let mut is_gamma = vec![false; mesh.num_free()];
    for &g in &gamma_free {
        is_gamma[g] = true;
    }
    let interior_free: Vec<usize> = (0..mesh.num_free()).filter(|&i| !is_gamma[i]).collect();
    (gamma_free, interior_free)
}

fn gather(a: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    let mut out = linalg::zeros(rows.len(), cols.len());
    for (jj, &j) in cols.iter().enumerate() {
        for (ii, &i) in rows.iter().enumerate() {
            out[(ii, jj)] = a[(i, j)];
        }
    }
    out
}

/// Build the dense interface operator and BDDC preconditioner for a sampled
/// coefficient field.
pub fn build_dense_oracle(
    mesh: &Mesh,
    part: &DofPartition,
    kappa: &[f64],
    weights: &ScalingWeights,
) -> DenseOracle {
    // global Schur complement by dense elimination
    let a = assemble_global(mesh, kappa).unwrap().dense();
    let (gamma_free, interior_free) = index_sets(mesh, part);
    let a_gg = gather(&a, &gamma_free, &gamma_free);
    let a_gi = gather(&a, &gamma_free, &interior_free);
    let a_ii = gather(&a, &interior_free, &interior_free);
    let a_ii_inv = invert(&a_ii);
    let mut a_ig = linalg::zeros(interior_free.len(), gamma_free.len());
    for j in 0..gamma_free.len() {
        for i in 0..interior_free.len() {
            a_ig[(i, j)] = a_gi[(j, i)];
        }
    }
    let s_gamma = &a_gg - &(&a_gi * &(&a_ii_inv * &a_ig));

    // partially assembled Schur complement: per-subdomain Schur blocks with
    // duplicated duals and shared primals
    let n_tilde = part.n_tilde();
    let mut s_tilde = linalg::zeros(n_tilde, n_tilde);
    let mut s_pi = linalg::zeros(part.n_pi(), part.n_pi());
    for (s, sub) in part.subdomains.iter().enumerate() {
        let al = assemble_subdomain(mesh, sub, kappa).unwrap();
        let ni = sub.n_interior();
        let nd = sub.n_dual();
        let nc = sub.n_primal();
        let ng = nd + nc;
        let a_ii_l = submatrix(&al, 0..ni, 0..ni);
        let a_gi_l = submatrix(&al, ni..ni + ng, 0..ni);
        let a_gg_l = submatrix(&al, ni..ni + ng, ni..ni + ng);
        let inv = invert(&a_ii_l);
        let mut a_ig_l = linalg::zeros(ni, ng);
        for j in 0..ng {
            for i in 0..ni {
                a_ig_l[(i, j)] = a_gi_l[(j, i)];
            }
        }
        let s_local = &a_gg_l - &(&a_gi_l * &(&inv * &a_ig_l));
        // interface dof positions of this subdomain in the tilde space:
        // duals at the subdomain's block, primals shared at the tail
        let mut pos = Vec::with_capacity(ng);
        for k in 0..nd {
            pos.push(part.tilde_offsets[s] + k);
        }
        for (_, &p) in sub.primal_global.iter().enumerate() {
            pos.push(part.n_dual_copies + p);
        }
        for (jj, &pj) in pos.iter().enumerate() {
            for (ii, &pi_) in pos.iter().enumerate() {
                s_tilde[(pi_, pj)] += s_local[(ii, jj)];
            }
        }

        // coarse contribution via the (r, c) blocks
        let nr = ni + nd;
        let a_rr = submatrix(&al, 0..nr, 0..nr);
        let a_cr = submatrix(&al, nr..nr + nc, 0..nr);
        let a_cc = submatrix(&al, nr..nr + nc, nr..nr + nc);
        let mut a_rc = linalg::zeros(nr, nc);
        for j in 0..nc {
            for i in 0..nr {
                a_rc[(i, j)] = a_cr[(j, i)];
            }
        }
        let spi_local = &a_cc - &(&a_cr * &(&invert(&a_rr) * &a_rc));
        for (jj, &pj) in sub.primal_global.iter().enumerate() {
            for (ii, &pi_) in sub.primal_global.iter().enumerate() {
                s_pi[(pi_, pj)] += spi_local[(ii, jj)];
            }
        }
    }

    // R̃ and the scaled injection
    let mut r_tilde = linalg::zeros(n_tilde, part.n_gamma());
    let mut r_tilde_d = linalg::zeros(n_tilde, part.n_gamma());
    for (s, sub) in part.subdomains.iter().enumerate() {
        for (k, &d) in sub.dual_global.iter().enumerate() {
            r_tilde[(part.tilde_offsets[s] + k, d)] = 1.0;
            r_tilde_d[(part.tilde_offsets[s] + k, d)] = weights.per_sub[s][k];
        }
    }
    for p in 0..part.n_pi() {
        r_tilde[(part.n_dual_copies + p, part.n_delta() + p)] = 1.0;
        r_tilde_d[(part.n_dual_copies + p, part.n_delta() + p)] = 1.0;
    }
    let s_tilde_inv = invert(&s_tilde);
    let mut rt = linalg::zeros(part.n_gamma(), n_tilde);
    for j in 0..n_tilde {
        for i in 0..part.n_gamma() {
            rt[(i, j)] = r_tilde_d[(j, i)];
        }
    }
    let m_inv = &rt * &(&s_tilde_inv * &r_tilde_d);

    DenseOracle {
        s_gamma,
        m_inv,
        s_pi,
    }
}

/// Dense matrix of a linear operator probed on basis vectors.
pub fn materialize(dim: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
    let mut out = linalg::zeros(dim, dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        let col = apply(&e);
        for i in 0..dim {
            out[(i, j)] = col[i];
        }
    }
    out
}

/// Relative Frobenius distance.
pub fn rel_frob(a: &Matrix, b: &Matrix) -> f64 {
    linalg::frob_diff(a, b) / linalg::frob(b).max(f64::MIN_POSITIVE)
}

/// Lognormal coefficient field from a seeded draw (not KL-based; just a
/// positive field for oracle exercises).
pub fn lognormal_field(mesh: &Mesh, seed: u64, scale: f64) -> Vec<f64> {
    stoch_bddc::field::sample_xi(seed, mesh.cells.len())
        .xi
        .iter()
        .map(|x| (scale * x).exp())
        .collect()
}
