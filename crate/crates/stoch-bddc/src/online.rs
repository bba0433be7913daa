//! Online stage: for one sample, evaluate the offline chaos expansions at the
//! subdomain-local coordinates and assemble the sample-specific BDDC
//! preconditioner (and, optionally, the surrogate interface operator).
//!
//! No factorization larger than the coarse matrix is performed here; the
//! dual-block solves reuse the evaluated inverse (SG) or the evaluated
//! Cholesky factor (SC).

use crate::bddc::{BddcPreconditioner, DualSolver, PrecSub, ScalingWeights, SchurOperator};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::offline::{ClassComponents, StochMethod, SurrogateComponents};
use crate::partition::DofPartition;

/// A per-sample instantiation of the stochastic preconditioner.
pub struct OnlineInstance {
    /// `None` exactly when the SG coarse matrix came out indefinite.
    pub preconditioner: Option<BddcPreconditioner>,
    /// Local coordinates `ξ̂^{(i)}` per subdomain.
    pub xihat: Vec<Vec<f64>>,
    pub spd_ok: bool,
    /// Dimensions of the factorizations performed online.
    pub factor_dims: Vec<usize>,
}

/// Evaluate the offline expansions at a sample given by its global KL
/// coordinates `ξ`.
pub fn instantiate(
    offline: &SurrogateComponents,
    part: &DofPartition,
    xi: &[f64],
    weights: ScalingWeights,
) -> Result<OnlineInstance> {
    offline.validate(part)?;
    let xihat: Vec<Vec<f64>> = offline
        .projections
        .iter()
        .map(|p| {
            let mut out = vec![0.0; p.nrows()];
            linalg::gemv_add(p, xi, &mut out);
            out
        })
        .collect();

    let mut subs = Vec::with_capacity(part.subdomains.len());
    let mut coarse = Vec::with_capacity(part.subdomains.len());
    for (s, sub) in part.subdomains.iter().enumerate() {
        let class = &offline.classes[offline.class_of_sub[s]];
        let local_xi = &xihat[s];
        let ni = sub.n_interior();
        let nd = sub.n_dual();
        let nr = ni + nd;
        match class {
            ClassComponents::Sg(sg) => {
                let inv = sg.inverse.evaluate(local_xi)?;
                let x = sg.x.evaluate(local_xi)?;
                let mut spi = sg.s_pi.evaluate(local_xi)?;
                linalg::symmetrize(&mut spi);
                coarse.push(spi);
                subs.push(PrecSub {
                    solver: DualSolver::DenseInverse(inv),
                    x_dual: crate::assembly::submatrix(&x, ni..nr, 0..sub.n_primal()),
                    n_interior: ni,
                    n_dual: nd,
                    dual_global: sub.dual_global.clone(),
                    primal_global: sub.primal_global.clone(),
                });
            }
            ClassComponents::Sc(sc) => {
                let l = sc.l_rr.evaluate(local_xi)?;
                let a_cr = sc.a_cr.evaluate(local_xi)?;
                let h = sc.h_pi.evaluate(local_xi)?;
                // X = (L Lᵀ)⁻¹ A_crᵀ with the evaluated factor
                let mut x = linalg::zeros(nr, sub.n_primal());
                for j in 0..sub.n_primal() {
                    for i in 0..nr {
                        x[(i, j)] = a_cr[(j, i)];
                    }
                }
                linalg::cholesky_solve_with_factor(&l, &mut x);
                // coarse contribution H Hᵀ, positive semidefinite by form
                let mut ht = linalg::zeros(h.ncols(), h.nrows());
                for j in 0..h.ncols() {
                    for i in 0..h.nrows() {
                        ht[(j, i)] = h[(i, j)];
                    }
                }
                coarse.push(&h * &ht);
                subs.push(PrecSub {
                    solver: DualSolver::TriangularFactor(l),
                    x_dual: crate::assembly::submatrix(&x, ni..nr, 0..sub.n_primal()),
                    n_interior: ni,
                    n_dual: nd,
                    dual_global: sub.dual_global.clone(),
                    primal_global: sub.primal_global.clone(),
                });
            }
        }
    }

    match BddcPreconditioner::from_parts(part, subs, &coarse, weights) {
        Ok(prec) => {
            let factor_dims = prec.stats.dims.clone();
            Ok(OnlineInstance {
                preconditioner: Some(prec),
                xihat,
                spd_ok: true,
                factor_dims,
            })
        }
        Err(Error::NotPositiveDefinite { .. }) if offline.method == StochMethod::Galerkin => {
            // the SG coarse matrix is not guaranteed definite; report and
            // let the caller decide
            Ok(OnlineInstance {
                preconditioner: None,
                xihat,
                spd_ok: false,
                factor_dims: vec![part.n_pi()],
            })
        }
        Err(e) => Err(e),
    }
}

/// Assemble the surrogate interface operator `S_{Γ,F}` from the offline
/// Schur expansions evaluated at the instance coordinates.
pub fn surrogate_schur(
    offline: &SurrogateComponents,
    part: &DofPartition,
    xihat: &[Vec<f64>],
) -> Result<SchurOperator> {
    if !offline.with_schur {
        return Err(Error::Config(
            "offline artifacts were built without Schur expansions".into(),
        ));
    }
    let mut blocks = Vec::with_capacity(part.subdomains.len());
    for (s, _sub) in part.subdomains.iter().enumerate() {
        let class = &offline.classes[offline.class_of_sub[s]];
        let local_xi = &xihat[s];
        let mut block: Matrix = match class {
            ClassComponents::Sg(sg) => {
                let schur = sg.schur.as_ref().expect("with_schur implies expansions");
                let a_gg = schur.a_gg.evaluate(local_xi)?;
                let z = schur.z_gg.evaluate(local_xi)?;
                let mut out = a_gg;
                for j in 0..out.ncols() {
                    for i in 0..out.nrows() {
                        out[(i, j)] -= z[(i, j)];
                    }
                }
                out
            }
            ClassComponents::Sc(sc) => {
                let schur = sc.schur.as_ref().expect("with_schur implies expansions");
                let a_gg = schur.a_gg.evaluate(local_xi)?;
                let a_gi = schur.a_gi.evaluate(local_xi)?;
                let l_ii = schur.l_ii.evaluate(local_xi)?;
                // A_ΓΓ − A_ΓI (L Lᵀ)⁻¹ A_ΓIᵀ with evaluated factors
                let mut rhs = linalg::zeros(a_gi.ncols(), a_gi.nrows());
                for j in 0..a_gi.ncols() {
                    for i in 0..a_gi.nrows() {
                        rhs[(j, i)] = a_gi[(i, j)];
                    }
                }
                linalg::cholesky_solve_with_factor(&l_ii, &mut rhs);
                let corr = &a_gi * &rhs;
                let mut out = a_gg;
                for j in 0..out.ncols() {
                    for i in 0..out.nrows() {
                        out[(i, j)] -= corr[(i, j)];
                    }
                }
                out
            }
        };
        linalg::symmetrize(&mut block);
        blocks.push(block);
    }
    Ok(SchurOperator::from_dense_blocks(part, blocks))
}
