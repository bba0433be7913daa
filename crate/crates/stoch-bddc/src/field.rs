//! Gaussian random field machinery: the squared-exponential covariance
//! kernel, discrete Karhunen–Loève eigendecompositions (global and
//! subdomain-local), seed-controlled sampling of the stochastic coordinates,
//! and projection of a sampled field onto a local KL basis.
//!
//! The discretization is Nyström at cell centroids with cell-area weights:
//! eigenpairs of `B = W^{1/2} K W^{1/2}` with `K_pq = C(x_p, x_q)`, modes
//! rescaled by `W^{-1/2}` so they are orthonormal in the area-weighted inner
//! product. For large global meshes the same construction is carried out on a
//! tensor quadrature grid, where the kernel separates into a Kronecker
//! product of one-dimensional kernels, and the eigenfunctions are carried to
//! the cell centroids by the Nyström extension formula.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mesh::Mesh;

/// Squared-exponential covariance `C(x,y) = σ² exp(−‖x−y‖² / l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub sigma2: f64,
    pub ell: f64,
}

impl CovarianceSpec {
    pub fn new(sigma2: f64, ell: f64) -> Self {
        assert!(sigma2 > 0.0 && ell > 0.0);
        Self { sigma2, ell }
    }

    /// Mean of the lognormal coefficient, `⟨exp(a)⟩ = e^{σ²/2}`.
    pub fn lognormal_mean(&self) -> f64 {
        (0.5 * self.sigma2).exp()
    }
}

pub fn covariance(x: [f64; 2], y: [f64; 2], spec: &CovarianceSpec) -> f64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    spec.sigma2 * (-(dx * dx + dy * dy) / spec.ell).exp()
}

/// Truncated discrete KL basis on a set of cells.
#[derive(Debug, Clone)]
pub struct KlBasis {
    /// Retained eigenvalues, descending.
    pub lambdas: Vec<f64>,
    /// Mode values at the cell centroids, one column per mode.
    pub modes: Matrix,
    /// Quadrature weights (cell areas).
    pub weights: Vec<f64>,
}

impl KlBasis {
    pub fn count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn num_cells(&self) -> usize {
        self.weights.len()
    }

    /// Total spectral mass of the covariance operator: by the trace identity
    /// it equals `σ² Σ w` independent of the eigendecomposition.
    pub fn total_energy(&self, spec: &CovarianceSpec) -> f64 {
        spec.sigma2 * self.weights.iter().sum::<f64>()
    }

    /// `(λ_1 + … + λ_k) / Σ λ`.
    pub fn energy_fraction(&self, spec: &CovarianceSpec, k: usize) -> f64 {
        self.lambdas[..k].iter().sum::<f64>() / self.total_energy(spec)
    }
}

fn sign_fix(modes: &mut Matrix) {
    for j in 0..modes.ncols() {
        let mut best = 0usize;
        let mut mag = -1.0;
        for i in 0..modes.nrows() {
            let a = modes[(i, j)].abs();
            if a > mag {
                mag = a;
                best = i;
            }
        }
        if modes[(best, j)] < 0.0 {
            for i in 0..modes.nrows() {
                modes[(i, j)] = -modes[(i, j)];
            }
        }
    }
}

/// Nyström KL eigendecomposition on the given cells.
pub fn discrete_kl(
    centroids: &[[f64; 2]],
    areas: &[f64],
    spec: &CovarianceSpec,
    m: usize,
) -> Result<KlBasis> {
    let nc = centroids.len();
    assert_eq!(areas.len(), nc);
    assert!(m >= 1 && m <= nc, "truncation must not exceed cell count");
    let sqrt_w: Vec<f64> = areas.iter().map(|&w| w.sqrt()).collect();
    let mut b = linalg::zeros(nc, nc);
    for p in 0..nc {
        for q in 0..=p {
            let v = covariance(centroids[p], centroids[q], spec) * sqrt_w[p] * sqrt_w[q];
            b[(p, q)] = v;
            b[(q, p)] = v;
        }
    }
    let (lambdas, vectors) = linalg::sym_eig(&b, "discrete_kl")?;
    let mut modes = linalg::zeros(nc, m);
    for j in 0..m {
        for i in 0..nc {
            modes[(i, j)] = vectors[(i, j)] / sqrt_w[i];
        }
    }
    sign_fix(&mut modes);
    Ok(KlBasis {
        lambdas: lambdas[..m].to_vec(),
        modes,
        weights: areas.to_vec(),
    })
}

/// Cell counts up to this bound use the direct dense eigendecomposition for
/// the global basis; larger meshes switch to the tensor-grid construction.
pub const DIRECT_GLOBAL_CELL_LIMIT: usize = 3000;

/// Midpoints per side of the tensor quadrature grid used for large meshes.
pub const TENSOR_GRID_SIDE: usize = 192;

/// Global KL basis evaluated at the mesh cell centroids.
///
/// Small meshes use [`discrete_kl`] on the triangle centroids directly. For
/// larger meshes the kernel's separability makes the tensor-grid
/// eigenproblem a pair of one-dimensional ones, and the modes are evaluated
/// at the centroids through the Nyström extension.
pub fn global_kl(mesh: &Mesh, spec: &CovarianceSpec, m: usize) -> Result<KlBasis> {
    if mesh.cells.len() <= DIRECT_GLOBAL_CELL_LIMIT {
        let centroids: Vec<[f64; 2]> = mesh.cells.iter().map(|c| c.centroid).collect();
        let areas = vec![mesh.cell_area(); mesh.cells.len()];
        return discrete_kl(&centroids, &areas, spec, m);
    }
    tensor_global_kl(mesh, spec, m, TENSOR_GRID_SIDE)
}

fn tensor_global_kl(mesh: &Mesh, spec: &CovarianceSpec, m: usize, mq: usize) -> Result<KlBasis> {
    let h = 1.0 / mq as f64;
    let grid: Vec<f64> = (0..mq).map(|i| (i as f64 + 0.5) * h).collect();
    let mut g1 = linalg::zeros(mq, mq);
    for p in 0..mq {
        for q in 0..=p {
            let d = grid[p] - grid[q];
            let v = h * (-(d * d) / spec.ell).exp();
            g1[(p, q)] = v;
            g1[(q, p)] = v;
        }
    }
    let (mu, u) = linalg::sym_eig(&g1, "tensor_global_kl")?;

    // top-m products σ² μ_j μ_k, deterministic tie-break by (j, k)
    let keep = mq.min(m + 1);
    let mut prods: Vec<(f64, usize, usize)> = Vec::with_capacity(keep * keep);
    for j in 0..keep {
        for k in 0..keep {
            prods.push((spec.sigma2 * mu[j] * mu[k], j, k));
        }
    }
    prods.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    prods.truncate(m);

    // 1D Nyström extension sums at distinct centroid abscissae
    let sqrt_h = h.sqrt();
    let extend = |t: f64, j: usize| -> f64 {
        let mut s = 0.0;
        for q in 0..mq {
            let d = t - grid[q];
            s += (-(d * d) / spec.ell).exp() * u[(q, j)];
        }
        s * sqrt_h / mu[j]
    };

    let nc = mesh.cells.len();
    let mut modes = linalg::zeros(nc, m);
    // centroid abscissae repeat across the structured mesh; cache per column
    let mut xcache: std::collections::HashMap<(u64, usize), f64> = std::collections::HashMap::new();
    let cached_extend =
        |t: f64, j: usize, cache: &mut std::collections::HashMap<(u64, usize), f64>| {
            let key = (t.to_bits(), j);
            if let Some(&v) = cache.get(&key) {
                return v;
            }
            let v = extend(t, j);
            cache.insert(key, v);
            v
        };
    for (col, &(_, j, k)) in prods.iter().enumerate() {
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let vx = cached_extend(cell.centroid[0], j, &mut xcache);
            let vy = cached_extend(cell.centroid[1], k, &mut xcache);
            modes[(ci, col)] = vx * vy;
        }
    }
    sign_fix(&mut modes);
    Ok(KlBasis {
        lambdas: prods.iter().map(|p| p.0).collect(),
        modes,
        weights: vec![mesh.cell_area(); nc],
    })
}

/// Local KL basis of one subdomain (all subdomains are congruent translates,
/// so the basis computed on any subdomain's cells serves every other one).
pub fn local_kl(mesh: &Mesh, spec: &CovarianceSpec, m: usize) -> Result<KlBasis> {
    let cells: Vec<usize> = mesh
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.subdomain == 0)
        .map(|(i, _)| i)
        .collect();
    let centroids: Vec<[f64; 2]> = cells.iter().map(|&c| mesh.cells[c].centroid).collect();
    let areas = vec![mesh.cell_area(); cells.len()];
    discrete_kl(&centroids, &areas, spec, m)
}

/// Seed-controlled vector of i.i.d. standard normal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    pub xi: Vec<f64>,
    pub seed: u64,
}

pub fn sample_xi(seed: u64, m: usize) -> SampleVector {
    assert!(m >= 1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let xi = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    SampleVector { xi, seed }
}

/// Evaluate the truncated expansion `a(cell) = Σ_m √λ_m a_m(cell) ξ_m`.
pub fn evaluate_field(basis: &KlBasis, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != basis.count() {
        return Err(Error::DimensionMismatch {
            context: "evaluate_field coordinates",
            expected: basis.count(),
            got: xi.len(),
        });
    }
    let scaled: Vec<f64> = basis
        .lambdas
        .iter()
        .zip(xi)
        .map(|(&l, &x)| l.max(0.0).sqrt() * x)
        .collect();
    let mut a = vec![0.0; basis.num_cells()];
    for (j, &s) in scaled.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for i in 0..a.len() {
            a[i] += basis.modes[(i, j)] * s;
        }
    }
    Ok(a)
}

/// `κ = exp(a)` per cell.
pub fn evaluate_kappa(basis: &KlBasis, xi: &[f64]) -> Result<Vec<f64>> {
    let mut a = evaluate_field(basis, xi)?;
    for v in &mut a {
        *v = v.exp();
    }
    Ok(a)
}

/// Project a sampled field (values of `a_{M_KL}` on the subdomain's cells)
/// onto a local basis: `ξ̂_m = (1/√λ_m) Σ_cells a(cell) a_m(cell) w_cell`.
pub fn local_coordinates(field_on_cells: &[f64], basis: &KlBasis) -> Result<Vec<f64>> {
    if field_on_cells.len() != basis.num_cells() {
        return Err(Error::DimensionMismatch {
            context: "local_coordinates field",
            expected: basis.num_cells(),
            got: field_on_cells.len(),
        });
    }
    let mut out = Vec::with_capacity(basis.count());
    for m in 0..basis.count() {
        let lam = basis.lambdas[m];
        if lam <= 0.0 {
            return Err(Error::ZeroKlEigenvalue {
                index: m,
                value: lam,
            });
        }
        let mut s = 0.0;
        for i in 0..basis.num_cells() {
            s += field_on_cells[i] * basis.modes[(i, m)] * basis.weights[i];
        }
        out.push(s / lam.sqrt());
    }
    Ok(out)
}

/// Matrix `P` with `ξ̂^{(i)} = P ξ`: column `n` is the projection of the
/// scaled global mode `√λ_n a_n` restricted to the subdomain's cells.
pub fn projection_matrix(
    global: &KlBasis,
    subdomain_cells: &[usize],
    local: &KlBasis,
) -> Result<Matrix> {
    let mut p = linalg::zeros(local.count(), global.count());
    let mut restricted = vec![0.0; subdomain_cells.len()];
    for n in 0..global.count() {
        let scale = global.lambdas[n].max(0.0).sqrt();
        for (k, &c) in subdomain_cells.iter().enumerate() {
            restricted[k] = scale * global.modes[(c, n)];
        }
        let col = local_coordinates(&restricted, local)?;
        for (m_, &v) in col.iter().enumerate() {
            p[(m_, n)] = v;
        }
    }
    Ok(p)
}
