//! Stiffness assembly for a per-cell coefficient field, subdomain block
//! extraction, and direct assembly of the chaos coefficient matrices of the
//! subdomain stiffness from a local KL basis.
//!
//! The coefficient is piecewise constant per triangle (its value at the cell
//! centroid), so P1 stiffness integrals are exact and the chaos coefficient
//! of `κ = exp(a)` has a separable closed form per cell.

use std::sync::Arc;

use crate::chaos::{MultiIndexSet, PcMatrix};
use crate::error::{Error, Result};
use crate::field::KlBasis;
use crate::linalg::{self, Matrix};
use crate::mesh::Mesh;
use crate::partition::SubdomainDofs;

/// Element stiffness matrix of one triangle (unit coefficient).
pub fn element_stiffness(mesh: &Mesh, cell: usize) -> [[f64; 3]; 3] {
    let nodes = &mesh.cells[cell].nodes;
    let p: Vec<[f64; 2]> = nodes.iter().map(|&nd| mesh.nodes[nd]).collect();
    let area = mesh.cell_area();
    let mut grads = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        // inward normal of the edge opposite vertex k, scaled so φ_k(p_k)=1
        let e = [b[0] - a[0], b[1] - a[1]];
        let nrm = [-e[1], e[0]];
        let denom = nrm[0] * (p[k][0] - a[0]) + nrm[1] * (p[k][1] - a[1]);
        grads[k] = [nrm[0] / denom, nrm[1] / denom];
    }
    let mut ke = [[0.0; 3]; 3];
    for s in 0..3 {
        for t in 0..3 {
            ke[s][t] = area * (grads[s][0] * grads[t][0] + grads[s][1] * grads[t][1]);
        }
    }
    ke
}

/// Dense assembly of `Σ_cells κ(cell) ∫ ∇φ_s·∇φ_t` over an explicit node
/// list. `kappa[k]` is the coefficient of `cells[k]`.
pub fn assemble_on_nodes(
    mesh: &Mesh,
    cells: &[usize],
    nodes: &[usize],
    kappa: &[f64],
) -> Result<Matrix> {
    assert_eq!(cells.len(), kappa.len());
    let mut index = vec![usize::MAX; mesh.nodes.len()];
    for (k, &nd) in nodes.iter().enumerate() {
        index[nd] = k;
    }
    let mut a = linalg::zeros(nodes.len(), nodes.len());
    for (&c, &kap) in cells.iter().zip(kappa) {
        if !(kap > 0.0) {
            return Err(Error::Config(format!(
                "nonpositive coefficient {kap} on cell {c}"
            )));
        }
        let ke = element_stiffness(mesh, c);
        let ids: Vec<usize> = mesh.cells[c].nodes.iter().map(|&nd| index[nd]).collect();
        for s in 0..3 {
            if ids[s] == usize::MAX {
                continue;
            }
            for t in 0..3 {
                if ids[t] == usize::MAX {
                    continue;
                }
                a[(ids[s], ids[t])] += kap * ke[s][t];
            }
        }
    }
    Ok(a)
}

/// Minimal CSR container for the assembled global stiffness (symmetric, free
/// dofs only). Production paths never form this operator; it exists for
/// whole-system checks and small dense oracles.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
        y
    }

    pub fn dense(&self) -> Matrix {
        let mut a = linalg::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                a[(i, self.col_idx[k])] = self.values[k];
            }
        }
        a
    }
}

/// Assemble the global stiffness over the free dofs.
pub fn assemble_global(mesh: &Mesh, kappa: &[f64]) -> Result<SparseSym> {
    assert_eq!(kappa.len(), mesh.cells.len());
    let n = mesh.num_free();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (c, cell) in mesh.cells.iter().enumerate() {
        let kap = kappa[c];
        if !(kap > 0.0) {
            return Err(Error::Config(format!(
                "nonpositive coefficient {kap} on cell {c}"
            )));
        }
        let ke = element_stiffness(mesh, c);
        for s in 0..3 {
            let fs = mesh.free_index[cell.nodes[s]];
            if fs == usize::MAX {
                continue;
            }
            for t in 0..3 {
                let ft = mesh.free_index[cell.nodes[t]];
                if ft == usize::MAX {
                    continue;
                }
                rows[fs].push((ft, kap * ke[s][t]));
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for row in &mut rows {
        row.sort_by_key(|&(j, _)| j);
        let mut last = usize::MAX;
        for &(j, v) in row.iter() {
            if j == last {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                last = j;
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseSym {
        dim: n,
        row_ptr,
        col_idx,
        values,
    })
}

/// Subdomain Neumann stiffness on the local free dofs, ordered interior,
/// dual, primal. `kappa` is indexed by global cell id.
pub fn assemble_subdomain(mesh: &Mesh, sub: &SubdomainDofs, kappa: &[f64]) -> Result<Matrix> {
    let local_kappa: Vec<f64> = sub.cells.iter().map(|&c| kappa[c]).collect();
    assemble_subdomain_local(mesh, sub, &local_kappa)
}

/// Same as [`assemble_subdomain`] with the coefficient given per position in
/// `sub.cells` (the order local KL modes are stored in).
pub fn assemble_subdomain_local(
    mesh: &Mesh,
    sub: &SubdomainDofs,
    kappa_local: &[f64],
) -> Result<Matrix> {
    assemble_on_nodes(mesh, &sub.cells, &sub.free_local(), kappa_local)
}

/// The `(I ⊕ Δ, Π)` block structure of a subdomain matrix.
#[derive(Debug, Clone)]
pub struct SubdomainBlocks {
    pub a_rr: Matrix,
    pub a_cr: Matrix,
    pub a_cc: Matrix,
    pub n_interior: usize,
    pub n_dual: usize,
}

impl SubdomainBlocks {
    pub fn n_r(&self) -> usize {
        self.n_interior + self.n_dual
    }
    pub fn n_c(&self) -> usize {
        self.a_cc.nrows()
    }
    pub fn a_ii(&self) -> Matrix {
        submatrix(&self.a_rr, 0..self.n_interior, 0..self.n_interior)
    }
    pub fn a_delta_i(&self) -> Matrix {
        submatrix(&self.a_rr, self.n_interior..self.n_r(), 0..self.n_interior)
    }
    pub fn a_delta_delta(&self) -> Matrix {
        submatrix(
            &self.a_rr,
            self.n_interior..self.n_r(),
            self.n_interior..self.n_r(),
        )
    }
    pub fn a_pi_i(&self) -> Matrix {
        submatrix(&self.a_cr, 0..self.n_c(), 0..self.n_interior)
    }
    pub fn a_pi_delta(&self) -> Matrix {
        submatrix(&self.a_cr, 0..self.n_c(), self.n_interior..self.n_r())
    }
    pub fn a_pi_pi(&self) -> Matrix {
        self.a_cc.clone()
    }

    /// Reassemble the full local matrix from the blocks.
    pub fn recombine(&self) -> Matrix {
        let nr = self.n_r();
        let nc = self.n_c();
        let mut a = linalg::zeros(nr + nc, nr + nc);
        for j in 0..nr {
            for i in 0..nr {
                a[(i, j)] = self.a_rr[(i, j)];
            }
        }
        for j in 0..nr {
            for i in 0..nc {
                a[(nr + i, j)] = self.a_cr[(i, j)];
                a[(j, nr + i)] = self.a_cr[(i, j)];
            }
        }
        for j in 0..nc {
            for i in 0..nc {
                a[(nr + i, nr + j)] = self.a_cc[(i, j)];
            }
        }
        a
    }
}

pub fn submatrix(a: &Matrix, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Matrix {
    let mut out = linalg::zeros(rows.len(), cols.len());
    for (jj, j) in cols.enumerate() {
        for (ii, i) in rows.clone().enumerate() {
            out[(ii, jj)] = a[(i, j)];
        }
    }
    out
}

/// Split a subdomain matrix (assembled in interior/dual/primal order) into
/// the `rr`, `cr`, `cc` blocks.
pub fn split_blocks(a: &Matrix, sub: &SubdomainDofs) -> SubdomainBlocks {
    let ni = sub.n_interior();
    let nd = sub.n_dual();
    let nc = sub.n_primal();
    let nr = ni + nd;
    assert_eq!(a.nrows(), nr + nc);
    SubdomainBlocks {
        a_rr: submatrix(a, 0..nr, 0..nr),
        a_cr: submatrix(a, nr..nr + nc, 0..nr),
        a_cc: submatrix(a, nr..nr + nc, nr..nr + nc),
        n_interior: ni,
        n_dual: nd,
    }
}

/// Per-cell chaos coefficients of `κ = exp(Σ_m √λ_m a_m ξ_m)`:
/// `κ_α(cell) = exp(½ Σ_m λ_m a_m²) Π_m (√λ_m a_m)^{α_m} / √(α_m!)`.
///
/// Returns one row per multi-index, one column per cell of the basis.
pub fn pc_kappa_coefficients(basis: &KlBasis, set: &MultiIndexSet) -> Matrix {
    assert_eq!(set.dim, basis.count());
    let nc = basis.num_cells();
    let m = basis.count();
    // c_m(cell) = √λ_m a_m(cell)
    let mut c = linalg::zeros(nc, m);
    for j in 0..m {
        let s = basis.lambdas[j].max(0.0).sqrt();
        for i in 0..nc {
            c[(i, j)] = s * basis.modes[(i, j)];
        }
    }
    let mut base = vec![0.0; nc];
    for i in 0..nc {
        let mut s = 0.0;
        for j in 0..m {
            s += c[(i, j)] * c[(i, j)];
        }
        base[i] = (0.5 * s).exp();
    }
    let inv_sqrt_fact: Vec<f64> = {
        let mut v = vec![1.0f64];
        let mut f = 1.0;
        for k in 1..=set.degree {
            f *= k as f64;
            v.push(1.0 / f.sqrt());
        }
        v
    };
    let mut out = linalg::zeros(set.len(), nc);
    for (ai, alpha) in set.indices.iter().enumerate() {
        for i in 0..nc {
            let mut v = base[i];
            for (j, &aj) in alpha.iter().enumerate() {
                if aj > 0 {
                    v *= c[(i, j)].powi(aj as i32) * inv_sqrt_fact[aj as usize];
                }
            }
            out[(ai, i)] = v;
        }
    }
    out
}

/// Chaos coefficient matrices of the subdomain stiffness: one stiffness
/// assembly per multi-index with the closed-form per-cell coefficients.
pub fn assemble_pc_matrices(
    mesh: &Mesh,
    sub: &SubdomainDofs,
    basis: &KlBasis,
    set: Arc<MultiIndexSet>,
) -> PcMatrix {
    assert_eq!(basis.num_cells(), sub.cells.len());
    let coeff = pc_kappa_coefficients(basis, &set);
    let nodes = sub.free_local();
    let mut index = vec![usize::MAX; mesh.nodes.len()];
    for (k, &nd) in nodes.iter().enumerate() {
        index[nd] = k;
    }
    let n = nodes.len();
    let mut mats: Vec<Matrix> = (0..set.len()).map(|_| linalg::zeros(n, n)).collect();
    for (pos, &c) in sub.cells.iter().enumerate() {
        let ke = element_stiffness(mesh, c);
        let ids: Vec<usize> = mesh.cells[c].nodes.iter().map(|&nd| index[nd]).collect();
        for s in 0..3 {
            if ids[s] == usize::MAX {
                continue;
            }
            for t in 0..3 {
                if ids[t] == usize::MAX {
                    continue;
                }
                let kst = ke[s][t];
                for (ai, mat) in mats.iter_mut().enumerate() {
                    mat[(ids[s], ids[t])] += coeff[(ai, pos)] * kst;
                }
            }
        }
    }
    PcMatrix::new(set, mats)
}
