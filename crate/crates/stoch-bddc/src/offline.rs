//! Offline stage: chaos expansions of every sample-dependent piece of the
//! BDDC preconditioner, per subdomain, via either stochastic Galerkin block
//! systems or stochastic collocation quadrature.
//!
//! On this structured decomposition all subdomains are congruent translates
//! and the covariance kernel is stationary, so subdomains share one local KL
//! basis and the expansions only depend on which sides of a subdomain touch
//! the outer boundary. Offline work is therefore done once per boundary
//! pattern (at most nine classes) instead of once per subdomain.

use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{assemble_pc_matrices, split_blocks, submatrix};
use crate::chaos::{multi_index_set, HermiteTable, MultiIndexSet, PcMatrix};
use crate::error::{Error, Result};
use crate::field::{projection_matrix, CovarianceSpec, KlBasis};
use crate::linalg::{self, Chol, Matrix};
use crate::mesh::Mesh;
use crate::partition::{DofPartition, SubdomainDofs};

/// Which construction produced the chaos expansions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochMethod {
    Galerkin,
    Collocation,
}

/// The Kronecker block Galerkin matrix `A_rrs = Σ_α T_α ⊗ A_α`, factorized.
pub struct SgBlockSystem {
    chol: Chol,
    pub block_dim: usize,
    pub set_d: Arc<MultiIndexSet>,
}

/// Assemble and factor the block system from an expansion of `A_rr` over the
/// degree-`2d` set.
pub fn sg_build_system(
    pc_arr: &PcMatrix,
    set_d: Arc<MultiIndexSet>,
    subdomain: Option<usize>,
) -> Result<SgBlockSystem> {
    assert_eq!(pc_arr.set.degree, 2 * set_d.degree, "A_rr must use S_2d");
    assert_eq!(pc_arr.nrows(), pc_arr.ncols());
    let nr = pc_arr.nrows();
    let nxi = set_d.len();
    let table = HermiteTable::new(pc_arr.set.degree);
    let mut big = linalg::zeros(nxi * nr, nxi * nr);
    for (alpha, coeff) in pc_arr.set.indices.iter().zip(&pc_arr.coeffs) {
        let grade: usize = alpha.iter().map(|&a| a as usize).sum();
        for l in 0..nxi {
            let bl = &set_d.indices[l];
            let gl: usize = bl.iter().map(|&a| a as usize).sum();
            for k in l..nxi {
                let bk = &set_d.indices[k];
                let gk: usize = bk.iter().map(|&a| a as usize).sum();
                if (grade + gl + gk) % 2 != 0 {
                    continue;
                }
                let t = table.triple(alpha, bk, bl);
                if t == 0.0 {
                    continue;
                }
                for j in 0..nr {
                    for i in 0..nr {
                        big[(l * nr + i, k * nr + j)] += t * coeff[(i, j)];
                    }
                }
            }
        }
    }
    // mirror the strictly upper block triangle
    for l in 0..nxi {
        for k in (l + 1)..nxi {
            for j in 0..nr {
                for i in 0..nr {
                    big[(k * nr + i, l * nr + j)] = big[(l * nr + j, k * nr + i)];
                }
            }
        }
    }
    let chol = Chol::new(&big, "SG block system factorization", subdomain)?;
    Ok(SgBlockSystem {
        chol,
        block_dim: nr,
        set_d,
    })
}

impl SgBlockSystem {
    pub fn n_xi(&self) -> usize {
        self.set_d.len()
    }

    /// Solve with a stacked right-hand side, one column per independent RHS.
    pub fn solve_stacked(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(rhs.nrows(), self.block_dim * self.n_xi());
        self.chol.solve_mat(rhs)
    }
}

/// Solve `A_rrs Y = v_rrs` for a vector right-hand side given by its chaos
/// coefficients over `S_d`, returning the coefficients of `Y`.
pub fn sg_solve(sys: &SgBlockSystem, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nr = sys.block_dim;
    let nxi = sys.n_xi();
    assert_eq!(v.len(), nxi);
    let mut rhs = linalg::zeros(nxi * nr, 1);
    for (k, vk) in v.iter().enumerate() {
        assert_eq!(vk.len(), nr);
        for i in 0..nr {
            rhs[(k * nr + i, 0)] = vk[i];
        }
    }
    let sol = sys.solve_stacked(&rhs);
    (0..nxi)
        .map(|k| (0..nr).map(|i| sol[(k * nr + i, 0)]).collect())
        .collect()
}

/// Chaos expansion of `A_rr⁻¹`: one solve per column of the identity with the
/// constant right-hand side `e₁ ⊗ e_j`. Coefficients are symmetrized (the
/// Galerkin solution of a symmetric quantity is symmetric only up to the
/// truncation).
pub fn sg_inverse(sys: &SgBlockSystem) -> PcMatrix {
    let nr = sys.block_dim;
    let nxi = sys.n_xi();
    let mut rhs = linalg::zeros(nxi * nr, nr);
    for j in 0..nr {
        rhs[(j, j)] = 1.0;
    }
    let sol = sys.solve_stacked(&rhs);
    let mut coeffs = Vec::with_capacity(nxi);
    for k in 0..nxi {
        let mut block = submatrix(&sol, k * nr..(k + 1) * nr, 0..nr);
        linalg::symmetrize(&mut block);
        coeffs.push(block);
    }
    PcMatrix::new(sys.set_d.clone(), coeffs)
}

/// Chaos expansion of `X = A_rr⁻¹ Bᵀ` for a coupling block `B` expanded over
/// `S_2d`; the right-hand side only needs the `S_d` coefficients.
pub fn sg_x(sys: &SgBlockSystem, pc_b: &PcMatrix) -> PcMatrix {
    let nr = sys.block_dim;
    let nxi = sys.n_xi();
    assert_eq!(pc_b.ncols(), nr);
    let nc = pc_b.nrows();
    let mut rhs = linalg::zeros(nxi * nr, nc);
    for k in 0..nxi {
        let bk = &pc_b.coeffs[k];
        for j in 0..nc {
            for i in 0..nr {
                rhs[(k * nr + i, j)] = bk[(j, i)];
            }
        }
    }
    let sol = sys.solve_stacked(&rhs);
    let coeffs = (0..nxi)
        .map(|k| submatrix(&sol, k * nr..(k + 1) * nr, 0..nc))
        .collect();
    PcMatrix::new(sys.set_d.clone(), coeffs)
}

/// Galerkin product `Z = (B A_rr⁻¹ Bᵀ)_{PC_d}` from the solved columns
/// `X = (A_rr⁻¹ Bᵀ)_{PC_d}`: `Z_{β(l)} = Σ_{α,k} ⟨ψ_α ψ_{β(k)} ψ_{β(l)}⟩ B_α X_{β(k)}`.
pub fn sg_congruence(pc_b: &PcMatrix, x: &PcMatrix) -> PcMatrix {
    let set_d = x.set.clone();
    let nxi = set_d.len();
    let nc = pc_b.nrows();
    let table = HermiteTable::new(pc_b.set.degree);
    let mut coeffs: Vec<Matrix> = (0..nxi).map(|_| linalg::zeros(nc, nc)).collect();
    for (alpha, b_alpha) in pc_b.set.indices.iter().zip(&pc_b.coeffs) {
        for (k, xk) in x.coeffs.iter().enumerate() {
            let bx = b_alpha * xk;
            for l in 0..nxi {
                let t = table.triple(alpha, &set_d.indices[k], &set_d.indices[l]);
                if t == 0.0 {
                    continue;
                }
                let zl = &mut coeffs[l];
                for j in 0..nc {
                    for i in 0..nc {
                        zl[(i, j)] += t * bx[(i, j)];
                    }
                }
            }
        }
    }
    for c in &mut coeffs {
        linalg::symmetrize(c);
    }
    PcMatrix::new(set_d, coeffs)
}

/// `Z = (A_cr A_rr⁻¹ A_crᵀ)_{PC_d}` and the coarse contribution
/// `S_Π^{(i)} = A_cc − Z` coefficient by coefficient.
pub fn sg_z_and_spi(pc_acr: &PcMatrix, x: &PcMatrix, pc_acc: &PcMatrix) -> (PcMatrix, PcMatrix) {
    let z = sg_congruence(pc_acr, x);
    let nxi = z.set.len();
    let mut spi_coeffs = Vec::with_capacity(nxi);
    for (k, zk) in z.coeffs.iter().enumerate() {
        let mut s = pc_acc.coeffs[k].clone();
        for j in 0..s.ncols() {
            for i in 0..s.nrows() {
                s[(i, j)] -= zk[(i, j)];
            }
        }
        spi_coeffs.push(s);
    }
    let spi = PcMatrix::new(z.set.clone(), spi_coeffs);
    (z, spi)
}

/// Chaos pieces of the surrogate subdomain Schur complement
/// `S_Γ^{(i)} ≈ A_ΓΓ,PC_d − (A_ΓI A_II⁻¹ A_ΓIᵀ)_{PC_d}`.
pub struct SgSchurClass {
    pub a_gg: PcMatrix,
    pub z_gg: PcMatrix,
}

pub fn sg_schur_pc(
    pc_agg: &PcMatrix,
    pc_agi: &PcMatrix,
    pc_aii: &PcMatrix,
    set_d: Arc<MultiIndexSet>,
    subdomain: Option<usize>,
) -> Result<SgSchurClass> {
    let sys = sg_build_system(pc_aii, set_d.clone(), subdomain)?;
    let y = sg_x(&sys, pc_agi);
    let z_gg = sg_congruence(pc_agi, &y);
    Ok(SgSchurClass {
        a_gg: pc_agg.truncated(set_d),
        z_gg,
    })
}

/// SG expansions of one subdomain class.
pub struct SgClass {
    pub inverse: PcMatrix,
    pub x: PcMatrix,
    pub s_pi: PcMatrix,
    pub schur: Option<SgSchurClass>,
}

/// SC expansions of one subdomain class. `l_rr` and `l_ii` hold lower
/// Cholesky factors (positive diagonal realizations).
pub struct ScClass {
    pub l_rr: PcMatrix,
    pub a_cr: PcMatrix,
    pub h_pi: PcMatrix,
    pub schur: Option<ScSchurClass>,
}

pub struct ScSchurClass {
    pub l_ii: PcMatrix,
    pub a_gi: PcMatrix,
    pub a_gg: PcMatrix,
}

pub enum ClassComponents {
    Sg(SgClass),
    Sc(ScClass),
}

impl ClassComponents {
    pub fn method(&self) -> StochMethod {
        match self {
            ClassComponents::Sg(_) => StochMethod::Galerkin,
            ClassComponents::Sc(_) => StochMethod::Collocation,
        }
    }
}

/// Tensor Gauss–Hermite collocation of all realization-valued components.
pub fn sc_build(
    mesh: &Mesh,
    sub: &SubdomainDofs,
    basis: &KlBasis,
    set_d: Arc<MultiIndexSet>,
    quad_points: usize,
    with_schur: bool,
    subdomain: Option<usize>,
) -> Result<ScClass> {
    assert!(quad_points >= 1);
    let m = basis.count();
    assert_eq!(set_d.dim, m);
    let (nodes1, weights1) = crate::chaos::gauss_hermite(quad_points);
    let ni = sub.n_interior();
    let nd = sub.n_dual();
    let nc = sub.n_primal();
    let nr = ni + nd;
    let ng = nd + nc;
    let nxi = set_d.len();

    let zero =
        |r: usize, c: usize| -> Vec<Matrix> { (0..nxi).map(|_| linalg::zeros(r, c)).collect() };
    let mut l_rr = zero(nr, nr);
    let mut a_cr = zero(nc, nr);
    let mut h_pi = zero(nc, nc);
    let mut l_ii = zero(ni, ni);
    let mut a_gi = zero(ng, ni);
    let mut a_gg = zero(ng, ng);

    // walk the tensor grid with a multi-digit counter
    let mut digits = vec![0usize; m];
    loop {
        let xi_q: Vec<f64> = digits.iter().map(|&j| nodes1[j]).collect();
        let w_q: f64 = digits.iter().map(|&j| weights1[j]).product();

        let kappa: Vec<f64> = {
            let a = crate::field::evaluate_field(basis, &xi_q)?;
            a.iter().map(|&v| v.exp()).collect()
        };
        let a = crate::assembly::assemble_subdomain_local(mesh, sub, &kappa)?;
        let blocks = split_blocks(&a, sub);
        let chol = Chol::new(&blocks.a_rr, "SC realization A_rr", subdomain)?;
        let l = chol.lower();
        let x_real = {
            let mut rhs = linalg::zeros(nr, nc);
            for j in 0..nc {
                for i in 0..nr {
                    rhs[(i, j)] = blocks.a_cr[(j, i)];
                }
            }
            chol.solve_mat(&rhs)
        };
        let mut spiesp = blocks.a_cc.clone();
        let corr = &blocks.a_cr * &x_real;
        for j in 0..nc {
            for i in 0..nc {
                spiesp[(i, j)] -= corr[(i, j)];
            }
        }
        let h = linalg::sym_sqrt(&spiesp, "SC realization S_Pi square root", subdomain)?;

        let psis = crate::chaos::basis_values(&set_d, &xi_q);
        let accumulate = |dst: &mut Vec<Matrix>, src: &Matrix| {
            for (k, &p) in psis.iter().enumerate() {
                let s = p * w_q;
                if s == 0.0 {
                    continue;
                }
                let d = &mut dst[k];
                for j in 0..src.ncols() {
                    for i in 0..src.nrows() {
                        d[(i, j)] += s * src[(i, j)];
                    }
                }
            }
        };
        accumulate(&mut l_rr, &l);
        accumulate(&mut a_cr, &blocks.a_cr);
        accumulate(&mut h_pi, &h);
        if with_schur {
            let a_ii_block = submatrix(&a, 0..ni, 0..ni);
            let chol_ii = Chol::new(&a_ii_block, "SC realization A_II", subdomain)?;
            accumulate(&mut l_ii, &chol_ii.lower());
            accumulate(&mut a_gi, &submatrix(&a, ni..ni + ng, 0..ni));
            accumulate(&mut a_gg, &submatrix(&a, ni..ni + ng, ni..ni + ng));
        }

        // advance counter
        let mut pos = 0;
        loop {
            if pos == m {
                break;
            }
            digits[pos] += 1;
            if digits[pos] < quad_points {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        if pos == m {
            break;
        }
    }

    let schur = if with_schur {
        Some(ScSchurClass {
            l_ii: PcMatrix::new(set_d.clone(), l_ii),
            a_gi: PcMatrix::new(set_d.clone(), a_gi),
            a_gg: PcMatrix::new(set_d.clone(), a_gg),
        })
    } else {
        None
    };
    Ok(ScClass {
        l_rr: PcMatrix::new(set_d.clone(), l_rr),
        a_cr: PcMatrix::new(set_d.clone(), a_cr),
        h_pi: PcMatrix::new(set_d, h_pi),
        schur,
    })
}

/// Build the full SG expansion set of one subdomain class.
pub fn sg_build_class(
    mesh: &Mesh,
    sub: &SubdomainDofs,
    basis: &KlBasis,
    set_d: Arc<MultiIndexSet>,
    with_schur: bool,
    subdomain: Option<usize>,
) -> Result<SgClass> {
    let set_2d = Arc::new(multi_index_set(set_d.dim, 2 * set_d.degree));
    let pc_full = assemble_pc_matrices(mesh, sub, basis, set_2d);
    let ni = sub.n_interior();
    let nd = sub.n_dual();
    let nc = sub.n_primal();
    let nr = ni + nd;
    let slice = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| -> PcMatrix {
        PcMatrix::new(
            pc_full.set.clone(),
            pc_full
                .coeffs
                .iter()
                .map(|c| submatrix(c, rows.clone(), cols.clone()))
                .collect(),
        )
    };
    let pc_arr = slice(0..nr, 0..nr);
    let pc_acr = slice(nr..nr + nc, 0..nr);
    let pc_acc = slice(nr..nr + nc, nr..nr + nc);

    let sys = sg_build_system(&pc_arr, set_d.clone(), subdomain)?;
    let inverse = sg_inverse(&sys);
    let x = sg_x(&sys, &pc_acr);
    let (_, s_pi) = sg_z_and_spi(&pc_acr, &x, &pc_acc);

    let schur = if with_schur {
        let ng = nd + nc;
        let pc_aii = slice(0..ni, 0..ni);
        let pc_agi = slice(ni..ni + ng, 0..ni);
        let pc_agg = slice(ni..ni + ng, ni..ni + ng);
        Some(sg_schur_pc(
            &pc_agg,
            &pc_agi,
            &pc_aii,
            set_d.clone(),
            subdomain,
        )?)
    } else {
        None
    };
    Ok(SgClass {
        inverse,
        x,
        s_pi,
        schur,
    })
}

/// Offline build options.
#[derive(Debug, Clone)]
pub struct OfflineOptions {
    pub method: StochMethod,
    /// Subdomain-local KL terms (`N_KL`).
    pub nkl: usize,
    /// Chaos degree `d`.
    pub degree: usize,
    /// Gauss–Hermite points per local dimension (collocation only).
    pub quad_points: usize,
    /// Also expand the subdomain Schur pieces for the surrogate operator.
    pub with_schur: bool,
}

/// All offline artifacts needed to instantiate per-sample preconditioners.
pub struct SurrogateComponents {
    pub method: StochMethod,
    pub set_d: Arc<MultiIndexSet>,
    pub local_basis: KlBasis,
    /// Class of each subdomain.
    pub class_of_sub: Vec<usize>,
    pub classes: Vec<ClassComponents>,
    /// Per-subdomain projection `ξ̂^{(i)} = P^{(i)} ξ`.
    pub projections: Vec<Matrix>,
    pub with_schur: bool,
}

/// Boundary-contact pattern of a subdomain, the key for offline sharing.
fn class_key(ns: usize, s: usize) -> u8 {
    let (sx, sy) = (s % ns, s / ns);
    let mut key = 0u8;
    if sx == 0 {
        key |= 1;
    }
    if sx + 1 == ns {
        key |= 2;
    }
    if sy == 0 {
        key |= 4;
    }
    if sy + 1 == ns {
        key |= 8;
    }
    key
}

/// Run the offline stage: one local KL basis, per-class chaos expansions,
/// and per-subdomain projection matrices.
pub fn build_offline(
    mesh: &Mesh,
    part: &DofPartition,
    global_basis: &KlBasis,
    spec: &CovarianceSpec,
    opts: &OfflineOptions,
) -> Result<SurrogateComponents> {
    let local_basis = crate::field::local_kl(mesh, spec, opts.nkl)?;
    let set_d = Arc::new(multi_index_set(opts.nkl, opts.degree));

    let mut key_to_class: std::collections::HashMap<u8, usize> = std::collections::HashMap::new();
    let mut representatives: Vec<usize> = Vec::new();
    let mut class_of_sub = Vec::with_capacity(mesh.num_subdomains());
    for s in 0..mesh.num_subdomains() {
        let key = class_key(mesh.ns, s);
        let id = *key_to_class.entry(key).or_insert_with(|| {
            representatives.push(s);
            representatives.len() - 1
        });
        class_of_sub.push(id);
    }

    let classes: Result<Vec<ClassComponents>> = representatives
        .par_iter()
        .map(|&s| {
            let sub = &part.subdomains[s];
            match opts.method {
                StochMethod::Galerkin => Ok(ClassComponents::Sg(sg_build_class(
                    mesh,
                    sub,
                    &local_basis,
                    set_d.clone(),
                    opts.with_schur,
                    Some(s),
                )?)),
                StochMethod::Collocation => Ok(ClassComponents::Sc(sc_build(
                    mesh,
                    sub,
                    &local_basis,
                    set_d.clone(),
                    opts.quad_points,
                    opts.with_schur,
                    Some(s),
                )?)),
            }
        })
        .collect();
    let classes = classes?;

    let projections: Result<Vec<Matrix>> = part
        .subdomains
        .par_iter()
        .map(|sub| projection_matrix(global_basis, &sub.cells, &local_basis))
        .collect();

    Ok(SurrogateComponents {
        method: opts.method,
        set_d,
        local_basis,
        class_of_sub,
        classes,
        projections: projections?,
        with_schur: opts.with_schur,
    })
}

impl SurrogateComponents {
    /// Check the structural compatibility with a decomposition.
    pub fn validate(&self, part: &DofPartition) -> Result<()> {
        if self.class_of_sub.len() != part.subdomains.len() {
            return Err(Error::DimensionMismatch {
                context: "offline subdomain count",
                expected: part.subdomains.len(),
                got: self.class_of_sub.len(),
            });
        }
        Ok(())
    }
}
