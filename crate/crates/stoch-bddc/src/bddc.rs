//! Deterministic BDDC: the interface Schur operator, ρ-scaling, the
//! partially assembled solve with coarse correction, and the exact and
//! mean-value preconditioners.
//!
//! The preconditioned interface problem is
//! `M⁻¹ S_Γ u_Γ = M⁻¹ g_Γ` with `M⁻¹ = R̃_{D,Γ}ᵀ S̃_Γ⁻¹ R̃_{D,Γ}`, where the
//! partially assembled inverse splits into independent subdomain dual solves
//! plus a coarse solve through the constraint matrix `Φ`.

use crate::assembly::{assemble_subdomain, split_blocks, submatrix};
use crate::error::Result;
use crate::field::CovarianceSpec;
use crate::linalg::{self, Chol, Matrix};
use crate::mesh::Mesh;
use crate::partition::DofPartition;

/// ρ-scaling weights: one weight per subdomain dual dof copy, forming a
/// partition of unity over the copies of each interface node.
#[derive(Debug, Clone)]
pub struct ScalingWeights {
    pub per_sub: Vec<Vec<f64>>,
}

/// Node-adjacent cell average of κ per subdomain, normalized over the
/// subdomains sharing each dual node.
pub fn rho_scaling(mesh: &Mesh, part: &DofPartition, kappa: &[f64]) -> ScalingWeights {
    let incident = mesh.node_to_cells();
    // mean of κ over the cells of subdomain s touching each of its dual nodes
    let kbar: Vec<Vec<f64>> = part
        .subdomains
        .iter()
        .enumerate()
        .map(|(s, sub)| {
            sub.dual
                .iter()
                .map(|&nd| {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for &c in &incident[nd] {
                        if mesh.cells[c].subdomain == s {
                            sum += kappa[c];
                            count += 1;
                        }
                    }
                    sum / count as f64
                })
                .collect()
        })
        .collect();
    let mut totals = vec![0.0; part.n_delta()];
    let mut owners = vec![0usize; part.n_delta()];
    for ((s, sub), kb) in part.subdomains.iter().enumerate().zip(&kbar) {
        for (&d, &v) in sub.dual_global.iter().zip(kb) {
            totals[d] += v;
            owners[d] = s; // last subdomain sharing this node
        }
    }
    // the last copy closes the partition of unity exactly
    let mut assigned = vec![0.0; part.n_delta()];
    let per_sub = part
        .subdomains
        .iter()
        .enumerate()
        .zip(&kbar)
        .map(|((s, sub), kb)| {
            sub.dual_global
                .iter()
                .zip(kb)
                .map(|(&d, &v)| {
                    if owners[d] == s {
                        1.0 - assigned[d]
                    } else {
                        let w = v / totals[d];
                        assigned[d] += w;
                        w
                    }
                })
                .collect()
        })
        .collect();
    ScalingWeights { per_sub }
}

/// `R̃_Γ`: copy a global interface vector into the partially assembled space.
pub fn inject_tilde(part: &DofPartition, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), part.n_gamma());
    let nd = part.n_delta();
    let mut out = vec![0.0; part.n_tilde()];
    for (sub, &off) in part.subdomains.iter().zip(&part.tilde_offsets) {
        for (k, &d) in sub.dual_global.iter().enumerate() {
            out[off + k] = u[d];
        }
    }
    out[part.n_dual_copies..].copy_from_slice(&u[nd..]);
    out
}

/// `R̃_{D,Γ}ᵀ`: weighted sum of the dual copies back onto the interface.
pub fn scaled_restrict(part: &DofPartition, w: &ScalingWeights, ut: &[f64]) -> Vec<f64> {
    assert_eq!(ut.len(), part.n_tilde());
    let nd = part.n_delta();
    let mut out = vec![0.0; part.n_gamma()];
    for ((sub, &off), ws) in part
        .subdomains
        .iter()
        .zip(&part.tilde_offsets)
        .zip(&w.per_sub)
    {
        for (k, &d) in sub.dual_global.iter().enumerate() {
            out[d] += ws[k] * ut[off + k];
        }
    }
    out[nd..].copy_from_slice(&ut[part.n_dual_copies..]);
    out
}

/// The averaging operator `E_D = R̃_Γ R̃_{D,Γ}ᵀ` on the partially assembled
/// space.
pub fn average_operator_apply(part: &DofPartition, w: &ScalingWeights, ut: &[f64]) -> Vec<f64> {
    inject_tilde(part, &scaled_restrict(part, w, ut))
}

enum SubOperator {
    /// Exact elimination: `A_ΓΓ u − A_ΓI A_II⁻¹ A_ΓIᵀ u`.
    Eliminated {
        a_gg: Matrix,
        a_gi: Matrix,
        a_ii: Chol,
    },
    /// Precomputed dense interface block (surrogate mode).
    Dense(Matrix),
}

/// Mode tag of a [`SchurOperator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchurMode {
    Exact,
    Surrogate,
}

/// Matrix-free global interface operator `S_Γ`, assembled per subdomain.
pub struct SchurOperator {
    pub mode: SchurMode,
    subs: Vec<SubOperator>,
    gamma_maps: Vec<Vec<usize>>,
    interior_maps: Vec<Vec<usize>>,
    dim: usize,
}

impl SchurOperator {
    /// Exact per-sample operator data: interface blocks plus factorized
    /// interior blocks of every subdomain.
    pub fn exact(mesh: &Mesh, part: &DofPartition, kappa: &[f64]) -> Result<Self> {
        let mut subs = Vec::with_capacity(part.subdomains.len());
        let mut gamma_maps = Vec::with_capacity(part.subdomains.len());
        let mut interior_maps = Vec::with_capacity(part.subdomains.len());
        for (si, sub) in part.subdomains.iter().enumerate() {
            let a = assemble_subdomain(mesh, sub, kappa)?;
            let ni = sub.n_interior();
            let ng = sub.n_dual() + sub.n_primal();
            let a_ii = Chol::new(&submatrix(&a, 0..ni, 0..ni), "A_II factorization", Some(si))?;
            subs.push(SubOperator::Eliminated {
                a_gg: submatrix(&a, ni..ni + ng, ni..ni + ng),
                a_gi: submatrix(&a, ni..ni + ng, 0..ni),
                a_ii,
            });
            gamma_maps.push(sub.gamma_global.clone());
            interior_maps.push(sub.interior.iter().map(|&nd| mesh.free_index[nd]).collect());
        }
        Ok(Self {
            mode: SchurMode::Exact,
            subs,
            gamma_maps,
            interior_maps,
            dim: part.n_gamma(),
        })
    }

    /// Surrogate operator from precomputed dense subdomain interface blocks.
    pub fn from_dense_blocks(part: &DofPartition, blocks: Vec<Matrix>) -> Self {
        let gamma_maps: Vec<Vec<usize>> = part
            .subdomains
            .iter()
            .map(|s| s.gamma_global.clone())
            .collect();
        let interior_maps = part.subdomains.iter().map(|s| s.interior.clone()).collect();
        Self {
            mode: SchurMode::Surrogate,
            subs: blocks.into_iter().map(SubOperator::Dense).collect(),
            gamma_maps,
            interior_maps,
            dim: part.n_gamma(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `S_Γ u`, summing subdomain contributions over the interface.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (sub, gmap) in self.subs.iter().zip(&self.gamma_maps) {
            let ul: Vec<f64> = gmap.iter().map(|&g| u[g]).collect();
            let mut vl = vec![0.0; ul.len()];
            match sub {
                SubOperator::Eliminated { a_gg, a_gi, a_ii } => {
                    linalg::gemv_add(a_gg, &ul, &mut vl);
                    let mut inner = vec![0.0; a_gi.ncols()];
                    linalg::gemv_transpose_add(a_gi, &ul, &mut inner);
                    a_ii.solve_vec_in_place(&mut inner);
                    let mut corr = vec![0.0; ul.len()];
                    linalg::gemv_add(a_gi, &inner, &mut corr);
                    for (v, c) in vl.iter_mut().zip(&corr) {
                        *v -= c;
                    }
                }
                SubOperator::Dense(s) => linalg::gemv_add(s, &ul, &mut vl),
            }
            for (&g, &v) in gmap.iter().zip(&vl) {
                out[g] += v;
            }
        }
        out
    }

    /// `g_Γ = f_Γ − A_{ΓI} A_{II}⁻¹ f_I` for a load vector over the free dofs.
    pub fn reduce_rhs(&self, mesh: &Mesh, part: &DofPartition, f_free: &[f64]) -> Vec<f64> {
        assert_eq!(f_free.len(), mesh.num_free());
        let mut g = vec![0.0; self.dim];
        for (k, &nd) in part
            .delta_nodes
            .iter()
            .chain(part.pi_nodes.iter())
            .enumerate()
        {
            g[k] = f_free[mesh.free_index[nd]];
        }
        for ((sub, gmap), imap) in self
            .subs
            .iter()
            .zip(&self.gamma_maps)
            .zip(&self.interior_maps)
        {
            if let SubOperator::Eliminated { a_gi, a_ii, .. } = sub {
                let mut fi: Vec<f64> = imap.iter().map(|&i| f_free[i]).collect();
                a_ii.solve_vec_in_place(&mut fi);
                let mut corr = vec![0.0; gmap.len()];
                linalg::gemv_add(a_gi, &fi, &mut corr);
                for (&gidx, &c) in gmap.iter().zip(&corr) {
                    g[gidx] -= c;
                }
            } else {
                panic!("reduce_rhs requires the exact operator");
            }
        }
        g
    }

    /// Recover the full free-dof solution from the interface solution:
    /// `u_I = A_II⁻¹ (f_I − A_ΓIᵀ u_Γ)` per subdomain.
    pub fn recover_interior(
        &self,
        mesh: &Mesh,
        part: &DofPartition,
        u_gamma: &[f64],
        f_free: &[f64],
    ) -> Vec<f64> {
        let mut u = vec![0.0; mesh.num_free()];
        for (k, &nd) in part
            .delta_nodes
            .iter()
            .chain(part.pi_nodes.iter())
            .enumerate()
        {
            u[mesh.free_index[nd]] = u_gamma[k];
        }
        for ((sub, gmap), imap) in self
            .subs
            .iter()
            .zip(&self.gamma_maps)
            .zip(&self.interior_maps)
        {
            if let SubOperator::Eliminated { a_gi, a_ii, .. } = sub {
                let ug: Vec<f64> = gmap.iter().map(|&g| u_gamma[g]).collect();
                let mut rhs: Vec<f64> = imap.iter().map(|&i| f_free[i]).collect();
                let mut corr = vec![0.0; rhs.len()];
                linalg::gemv_transpose_add(a_gi, &ug, &mut corr);
                for (r, c) in rhs.iter_mut().zip(&corr) {
                    *r -= c;
                }
                a_ii.solve_vec_in_place(&mut rhs);
                for (&i, &v) in imap.iter().zip(&rhs) {
                    u[i] = v;
                }
            } else {
                panic!("recover_interior requires the exact operator");
            }
        }
        u
    }
}

/// How the dual-block solve `A_rr^{(i)⁻¹}` is realized per subdomain.
pub enum DualSolver {
    /// Exact Cholesky factorization.
    Factored(Chol),
    /// Evaluated chaos expansion of the inverse (SG online).
    DenseInverse(Matrix),
    /// Evaluated lower Cholesky factor (SC online).
    TriangularFactor(Matrix),
}

impl DualSolver {
    fn solve_in_place(&self, v: &mut Vec<f64>) {
        match self {
            DualSolver::Factored(chol) => chol.solve_vec_in_place(v),
            DualSolver::DenseInverse(inv) => {
                let mut out = vec![0.0; v.len()];
                linalg::gemv_add(inv, v, &mut out);
                *v = out;
            }
            DualSolver::TriangularFactor(l) => {
                let mut m = linalg::col_from(v);
                linalg::cholesky_solve_with_factor(l, &mut m);
                *v = linalg::col_to_vec(&m);
            }
        }
    }

    /// Solve with a matrix of right-hand sides.
    pub fn solve_mat(&self, rhs: &Matrix) -> Matrix {
        match self {
            DualSolver::Factored(chol) => chol.solve_mat(rhs),
            DualSolver::DenseInverse(inv) => inv * rhs,
            DualSolver::TriangularFactor(l) => {
                let mut out = rhs.clone();
                linalg::cholesky_solve_with_factor(l, &mut out);
                out
            }
        }
    }
}

/// Per-subdomain pieces of the preconditioner.
pub struct PrecSub {
    pub solver: DualSolver,
    /// Dual rows of `X = A_rr⁻¹ A_crᵀ` (the `Φ` correction).
    pub x_dual: Matrix,
    pub n_interior: usize,
    pub n_dual: usize,
    pub dual_global: Vec<usize>,
    pub primal_global: Vec<usize>,
}

/// Sizes of the factorizations performed while building a preconditioner;
/// lets callers check the claimed online cost.
#[derive(Debug, Clone, Default)]
pub struct FactorStats {
    pub dims: Vec<usize>,
}

impl FactorStats {
    pub fn record(&mut self, dim: usize) {
        self.dims.push(dim);
    }
    pub fn max_dim(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(0)
    }
}

pub struct BddcPreconditioner {
    pub subs: Vec<PrecSub>,
    pub s_pi: Chol,
    pub s_pi_matrix: Matrix,
    pub weights: ScalingWeights,
    pub n_delta: usize,
    pub n_pi: usize,
    pub stats: FactorStats,
}

/// Assemble the global coarse matrix from per-subdomain contributions
/// `S_Π^{(i)} = A_cc − A_cr X`.
pub fn assemble_coarse_matrix(part: &DofPartition, contributions: &[Matrix]) -> Matrix {
    let npi = part.n_pi();
    let mut s_pi = linalg::zeros(npi, npi);
    for (sub, spi) in part.subdomains.iter().zip(contributions) {
        let pm = &sub.primal_global;
        for a in 0..pm.len() {
            for b in 0..pm.len() {
                s_pi[(pm[a], pm[b])] += spi[(a, b)];
            }
        }
    }
    s_pi
}

/// Build the exact BDDC preconditioner for a per-cell coefficient field.
pub fn build_preconditioner(
    mesh: &Mesh,
    part: &DofPartition,
    kappa: &[f64],
    weights: ScalingWeights,
) -> Result<BddcPreconditioner> {
    let mut stats = FactorStats::default();
    let mut subs = Vec::with_capacity(part.subdomains.len());
    let mut coarse = Vec::with_capacity(part.subdomains.len());
    for (si, sub) in part.subdomains.iter().enumerate() {
        let a = assemble_subdomain(mesh, sub, kappa)?;
        let blocks = split_blocks(&a, sub);
        let chol = Chol::new(&blocks.a_rr, "A_rr factorization", Some(si))?;
        stats.record(blocks.n_r());
        let mut rhs = linalg::zeros(blocks.n_r(), blocks.n_c());
        for j in 0..blocks.n_c() {
            for i in 0..blocks.n_r() {
                rhs[(i, j)] = blocks.a_cr[(j, i)];
            }
        }
        let x = chol.solve_mat(&rhs);
        let mut spi = blocks.a_cc.clone();
        // S_Π^{(i)} = A_cc − A_cr X
        let correction = &blocks.a_cr * &x;
        for j in 0..spi.ncols() {
            for i in 0..spi.nrows() {
                spi[(i, j)] -= correction[(i, j)];
            }
        }
        coarse.push(spi);
        subs.push(PrecSub {
            solver: DualSolver::Factored(chol),
            x_dual: submatrix(&x, blocks.n_interior..blocks.n_r(), 0..blocks.n_c()),
            n_interior: blocks.n_interior,
            n_dual: blocks.n_dual,
            dual_global: sub.dual_global.clone(),
            primal_global: sub.primal_global.clone(),
        });
    }
    let s_pi_matrix = assemble_coarse_matrix(part, &coarse);
    stats.record(part.n_pi());
    let s_pi = Chol::new(&s_pi_matrix, "coarse S_Pi factorization", None)?;
    Ok(BddcPreconditioner {
        subs,
        s_pi,
        s_pi_matrix,
        weights,
        n_delta: part.n_delta(),
        n_pi: part.n_pi(),
        stats,
    })
}

/// BDDC built with the constant mean coefficient `κ ≡ e^{σ²/2}`.
pub fn mean_preconditioner(
    mesh: &Mesh,
    part: &DofPartition,
    spec: &CovarianceSpec,
) -> Result<BddcPreconditioner> {
    let kappa = vec![spec.lognormal_mean(); mesh.cells.len()];
    let weights = rho_scaling(mesh, part, &kappa);
    build_preconditioner(mesh, part, &kappa, weights)
}

impl BddcPreconditioner {
    pub fn dim(&self) -> usize {
        self.n_delta + self.n_pi
    }

    /// Build a preconditioner from already-evaluated per-subdomain parts
    /// (used by the online stage).
    pub fn from_parts(
        part: &DofPartition,
        subs: Vec<PrecSub>,
        coarse: &[Matrix],
        weights: ScalingWeights,
    ) -> Result<Self> {
        let mut stats = FactorStats::default();
        let s_pi_matrix = assemble_coarse_matrix(part, coarse);
        stats.record(part.n_pi());
        let s_pi = Chol::new(&s_pi_matrix, "coarse S_Pi factorization", None)?;
        Ok(Self {
            subs,
            s_pi,
            s_pi_matrix,
            weights,
            n_delta: part.n_delta(),
            n_pi: part.n_pi(),
            stats,
        })
    }

    /// `z = R̃_{D,Γ}ᵀ S̃_Γ⁻¹ R̃_{D,Γ} r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.dim());
        let (r_delta, r_pi) = r.split_at(self.n_delta);
        let mut coarse_rhs = r_pi.to_vec();
        let mut dual_results: Vec<Vec<f64>> = Vec::with_capacity(self.subs.len());
        for (sub, w) in self.subs.iter().zip(&self.weights.per_sub) {
            let w_d: Vec<f64> = sub
                .dual_global
                .iter()
                .zip(w)
                .map(|(&d, &wk)| wk * r_delta[d])
                .collect();
            // dual solve with zero interior padding
            let mut pad = vec![0.0; sub.n_interior + sub.n_dual];
            pad[sub.n_interior..].copy_from_slice(&w_d);
            sub.solver.solve_in_place(&mut pad);
            dual_results.push(pad[sub.n_interior..].to_vec());
            // Φᵀ w: subtract X_Δᵀ w_Δ on this subdomain's primal dofs
            let mut xtw = vec![0.0; sub.primal_global.len()];
            linalg::gemv_transpose_add(&sub.x_dual, &w_d, &mut xtw);
            for (&p, &v) in sub.primal_global.iter().zip(&xtw) {
                coarse_rhs[p] -= v;
            }
        }
        let y = self.s_pi.solve_vec(&coarse_rhs);
        let mut z = vec![0.0; self.dim()];
        z[self.n_delta..].copy_from_slice(&y);
        for ((sub, w), mut z_d) in self
            .subs
            .iter()
            .zip(&self.weights.per_sub)
            .zip(dual_results)
        {
            let y_loc: Vec<f64> = sub.primal_global.iter().map(|&p| y[p]).collect();
            let mut corr = vec![0.0; z_d.len()];
            linalg::gemv_add(&sub.x_dual, &y_loc, &mut corr);
            for (zd, c) in z_d.iter_mut().zip(&corr) {
                *zd -= c;
            }
            for ((&d, &wk), &v) in sub.dual_global.iter().zip(w).zip(&z_d) {
                z[d] += wk * v;
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_xi;
    use crate::mesh::build_mesh;
    use crate::partition::classify_dofs;
    use proptest::prelude::*;

    fn lognormal_field(mesh: &Mesh, seed: u64, scale: f64) -> Vec<f64> {
        sample_xi(seed, mesh.cells.len())
            .xi
            .iter()
            .map(|x| (scale * x).exp())
            .collect()
    }

    #[test]
    fn rho_weights_constant_field() {
        let mesh = build_mesh(2, 2);
        let part = classify_dofs(&mesh);
        let w = rho_scaling(&mesh, &part, &vec![3.7; mesh.cells.len()]);
        for ws in &w.per_sub {
            assert!(ws.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn partition_of_unity_holds_exactly() {
        let mesh = build_mesh(3, 2);
        let part = classify_dofs(&mesh);
        let kappa = lognormal_field(&mesh, 17, 0.8);
        let w = rho_scaling(&mesh, &part, &kappa);
        // R̃_{D,Γ}ᵀ R̃_Γ = I on a basis of the interface space
        for g in 0..part.n_gamma() {
            let mut e = vec![0.0; part.n_gamma()];
            e[g] = 1.0;
            let round = scaled_restrict(&part, &w, &inject_tilde(&part, &e));
            for (k, &v) in round.iter().enumerate() {
                let expect = if k == g { 1.0 } else { 0.0 };
                assert!((v - expect).abs() == 0.0, "entry ({g},{k}) = {v}");
            }
        }
    }

    #[test]
    fn average_operator_cases() {
        let mesh = build_mesh(2, 2);
        let part = classify_dofs(&mesh);
        let kappa = lognormal_field(&mesh, 3, 0.8);
        let w = rho_scaling(&mesh, &part, &kappa);
        // continuous input is reproduced
        let u: Vec<f64> = (0..part.n_gamma())
            .map(|k| (k as f64).sin() + 2.0)
            .collect();
        let ut = inject_tilde(&part, &u);
        let avg = average_operator_apply(&part, &w, &ut);
        for (a, b) in avg.iter().zip(&ut) {
            assert!((a - b).abs() < 1e-15);
        }
        // equal weights average two copies
        let wc = rho_scaling(&mesh, &part, &vec![1.0; mesh.cells.len()]);
        let mut ut2 = vec![0.0; part.n_tilde()];
        ut2[0] = 1.0; // one copy of some dual node
        let d0 = part.subdomains[0].dual_global[0];
        let avg2 = average_operator_apply(&part, &wc, &ut2);
        let mut count = 0;
        for (sub, &off) in part.subdomains.iter().zip(&part.tilde_offsets) {
            for (k, &d) in sub.dual_global.iter().enumerate() {
                if d == d0 {
                    assert!((avg2[off + k] - 0.5).abs() < 1e-15);
                    count += 1;
                }
            }
        }
        assert_eq!(count, 2);
    }

    #[test]
    fn schur_apply_trivial_and_spd() {
        let mesh = build_mesh(2, 2);
        let part = classify_dofs(&mesh);
        let kappa = lognormal_field(&mesh, 1, 0.5);
        let op = SchurOperator::exact(&mesh, &part, &kappa).unwrap();
        let zero = op.apply(&vec![0.0; part.n_gamma()]);
        assert!(zero.iter().all(|&v| v == 0.0));
        for t in 0..50 {
            let u = sample_xi(100 + t, part.n_gamma()).xi;
            let su = op.apply(&u);
            assert!(linalg::dot(&u, &su) > 0.0);
        }
    }

    #[test]
    fn reduce_rhs_cases() {
        let mesh = build_mesh(2, 2);
        let part = classify_dofs(&mesh);
        let kappa = lognormal_field(&mesh, 2, 0.5);
        let op = SchurOperator::exact(&mesh, &part, &kappa).unwrap();
        let zero = op.reduce_rhs(&mesh, &part, &vec![0.0; mesh.num_free()]);
        assert!(zero.iter().all(|&v| v == 0.0));
        // interface-supported load passes through untouched
        let mut f = vec![0.0; mesh.num_free()];
        for &nd in part.delta_nodes.iter().chain(part.pi_nodes.iter()) {
            f[mesh.free_index[nd]] = 1.0;
        }
        let g = op.reduce_rhs(&mesh, &part, &f);
        // interior elimination only subtracts terms driven by f_I = 0
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn mean_preconditioner_properties() {
        let mesh = build_mesh(2, 2);
        let part = classify_dofs(&mesh);
        // σ² → 0 gives the κ ≡ 1 preconditioner
        let spec = CovarianceSpec::new(1e-300, 1.0);
        let m = mean_preconditioner(&mesh, &part, &spec).unwrap();
        let unit = build_preconditioner(
            &mesh,
            &part,
            &vec![1.0; mesh.cells.len()],
            rho_scaling(&mesh, &part, &vec![1.0; mesh.cells.len()]),
        )
        .unwrap();
        let r = sample_xi(9, part.n_gamma()).xi;
        let a = m.apply(&r);
        let b = unit.apply(&r);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn preconditioner_apply_symmetric() {
        let mesh = build_mesh(3, 3);
        let part = classify_dofs(&mesh);
        let kappa = lognormal_field(&mesh, 23, 0.7);
        let w = rho_scaling(&mesh, &part, &kappa);
        let prec = build_preconditioner(&mesh, &part, &kappa, w).unwrap();
        for t in 0..20 {
            let r = sample_xi(300 + t, part.n_gamma()).xi;
            let s = sample_xi(400 + t, part.n_gamma()).xi;
            let lhs = linalg::dot(&prec.apply(&r), &s);
            let rhs = linalg::dot(&r, &prec.apply(&s));
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale < 1e-10, "trial {t}");
        }
        let zero = prec.apply(&vec![0.0; part.n_gamma()]);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coarse_contributions_semidefinite() {
        let mesh = build_mesh(3, 2);
        let part = classify_dofs(&mesh);
        let kappa = lognormal_field(&mesh, 31, 0.6);
        for sub in &part.subdomains {
            let a = assemble_subdomain(&mesh, sub, &kappa).unwrap();
            let blocks = split_blocks(&a, sub);
            let chol = Chol::new(&blocks.a_rr, "test", None).unwrap();
            let mut rhs = linalg::zeros(blocks.n_r(), blocks.n_c());
            for j in 0..blocks.n_c() {
                for i in 0..blocks.n_r() {
                    rhs[(i, j)] = blocks.a_cr[(j, i)];
                }
            }
            let x = chol.solve_mat(&rhs);
            let mut spi = blocks.a_cc.clone();
            let corr = &blocks.a_cr * &x;
            for j in 0..spi.ncols() {
                for i in 0..spi.nrows() {
                    spi[(i, j)] -= corr[(i, j)];
                }
            }
            let (lambdas, _) = linalg::sym_eig(&spi, "test").unwrap();
            for &l in &lambdas {
                assert!(l > -1e-12 * lambdas[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn phi_primal_rows_are_identity_pattern() {
        // Φ restricted to primal rows is the R_{ΓΠ} injection: for a residual
        // supported on Π the coarse right-hand side is r_Π itself, so the
        // primal part of the output solves S_Π z_Π = r_Π
        let mesh = build_mesh(3, 2);
        let part = classify_dofs(&mesh);
        let kappa = vec![1.0; mesh.cells.len()];
        let w = rho_scaling(&mesh, &part, &kappa);
        let prec = build_preconditioner(&mesh, &part, &kappa, w).unwrap();
        let mut r = vec![0.0; part.n_gamma()];
        for (k, v) in r[part.n_delta()..].iter_mut().enumerate() {
            *v = 1.0 + k as f64;
        }
        let z = prec.apply(&r);
        let mut back = vec![0.0; part.n_pi()];
        linalg::gemv_add(&prec.s_pi_matrix, &z[part.n_delta()..], &mut back);
        for (got, want) in back.iter().zip(&r[part.n_delta()..]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// E_D is idempotent for any positive coefficient field.
        #[test]
        fn averaging_is_idempotent(seed in 0u64..1000, scale in 0.05f64..1.2) {
            let mesh = build_mesh(3, 2);
            let part = classify_dofs(&mesh);
            let kappa = lognormal_field(&mesh, seed, scale);
            let w = rho_scaling(&mesh, &part, &kappa);
            let ut = sample_xi(seed.wrapping_add(77), part.n_tilde()).xi;
            let once = average_operator_apply(&part, &w, &ut);
            let twice = average_operator_apply(&part, &w, &once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-13);
            }
        }

        /// ρ-scaling weight ratios follow the coefficient ratio.
        #[test]
        fn rho_weights_follow_contrast(ratio in 1.0f64..20.0) {
            let mesh = build_mesh(2, 2);
            let part = classify_dofs(&mesh);
            // left half κ=ratio, right half κ=1
            let kappa: Vec<f64> = mesh
                .cells
                .iter()
                .map(|c| if c.centroid[0] < 0.5 { ratio } else { 1.0 })
                .collect();
            let w = rho_scaling(&mesh, &part, &kappa);
            // the vertical-edge dual node between subdomains 0 and 1
            let sub0 = &part.subdomains[0];
            for (k, &nd) in sub0.dual.iter().enumerate() {
                let (ix, _) = mesh.node_grid(nd);
                if ix == mesh.n {
                    let expect = ratio / (ratio + 1.0);
                    prop_assert!((w.per_sub[0][k] - expect).abs() < 1e-12);
                }
            }
        }
    }
}
