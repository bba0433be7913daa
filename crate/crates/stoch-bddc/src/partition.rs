//! Classification of free degrees of freedom into interior, dual and primal
//! sets, plus the index maps between the global interface space, the partially
//! assembled space and the subdomain-local spaces.
//!
//! Conventions used everywhere downstream:
//! - global interface dofs are ordered all duals first (ascending node id),
//!   then all primals (ascending node id);
//! - subdomain-local free dofs are ordered interior, dual, primal, each
//!   ascending by node id, so `r = I ⊕ Δ` occupies the leading block;
//! - the partially assembled space stacks every subdomain's dual copies in
//!   subdomain order, followed by the shared primal block.

use crate::mesh::Mesh;

/// Index data of one subdomain.
#[derive(Debug, Clone)]
pub struct SubdomainDofs {
    /// Node ids interior to the subdomain (`I^{(i)}`).
    pub interior: Vec<usize>,
    /// Node ids on the subdomain interface boundary that are dual (`Δ^{(i)}`).
    pub dual: Vec<usize>,
    /// Node ids of the subdomain's free cross points (`Π^{(i)}`).
    pub primal: Vec<usize>,
    /// Cell ids of the subdomain.
    pub cells: Vec<usize>,
    /// Global Δ index of each local dual dof (`R_Δ^{(i)}`).
    pub dual_global: Vec<usize>,
    /// Global Π index of each local primal dof (`R_Π^{(i)}`).
    pub primal_global: Vec<usize>,
    /// Global Γ index of each local interface dof, duals then primals.
    pub gamma_global: Vec<usize>,
}

impl SubdomainDofs {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }
    pub fn n_dual(&self) -> usize {
        self.dual.len()
    }
    pub fn n_primal(&self) -> usize {
        self.primal.len()
    }
    /// Size of `W_r^{(i)} = W_I^{(i)} ⊕ W_Δ^{(i)}`.
    pub fn n_r(&self) -> usize {
        self.interior.len() + self.dual.len()
    }
    /// Local free node ids in assembly order: interior, dual, primal.
    pub fn free_local(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.n_r() + self.n_primal());
        v.extend_from_slice(&self.interior);
        v.extend_from_slice(&self.dual);
        v.extend_from_slice(&self.primal);
        v
    }
}

#[derive(Debug, Clone)]
pub struct DofPartition {
    /// Global Δ node ids, ascending.
    pub delta_nodes: Vec<usize>,
    /// Global Π node ids, ascending.
    pub pi_nodes: Vec<usize>,
    /// Γ index of each node (`usize::MAX` if not on the interface).
    pub gamma_of_node: Vec<usize>,
    pub subdomains: Vec<SubdomainDofs>,
    /// Offset of each subdomain's dual block in the partially assembled space.
    pub tilde_offsets: Vec<usize>,
    /// Total number of dual copies (`Σ_i |Δ^{(i)}|`).
    pub n_dual_copies: usize,
}

impl DofPartition {
    pub fn n_delta(&self) -> usize {
        self.delta_nodes.len()
    }
    pub fn n_pi(&self) -> usize {
        self.pi_nodes.len()
    }
    pub fn n_gamma(&self) -> usize {
        self.delta_nodes.len() + self.pi_nodes.len()
    }
    /// Dimension of the partially assembled space `W̃_Γ`.
    pub fn n_tilde(&self) -> usize {
        self.n_dual_copies + self.n_pi()
    }
    /// Γ index of a global Δ index.
    pub fn gamma_of_delta(&self, d: usize) -> usize {
        d
    }
    /// Γ index of a global Π index.
    pub fn gamma_of_pi(&self, p: usize) -> usize {
        self.n_delta() + p
    }
}

/// Classify the free dofs of a mesh.
///
/// Primal dofs are the free subdomain cross points (both grid coordinates are
/// multiples of `n`), dual dofs are the remaining free interface nodes, and
/// interior dofs are assigned to their unique subdomain.
pub fn classify_dofs(mesh: &Mesh) -> DofPartition {
    let n = mesh.n;
    let ns = mesh.ns;
    let stride = mesh.cells_per_side() + 1;

    let mut delta_nodes = Vec::new();
    let mut pi_nodes = Vec::new();
    let mut gamma_of_node = vec![usize::MAX; mesh.nodes.len()];

    for &nd in &mesh.free_nodes {
        let (ix, iy) = (nd % stride, nd / stride);
        let on_v = ix % n == 0;
        let on_h = iy % n == 0;
        if on_v && on_h {
            pi_nodes.push(nd);
        } else if on_v || on_h {
            delta_nodes.push(nd);
        }
    }
    for (k, &nd) in delta_nodes.iter().enumerate() {
        gamma_of_node[nd] = k;
    }
    for (k, &nd) in pi_nodes.iter().enumerate() {
        gamma_of_node[nd] = delta_nodes.len() + k;
    }

    let delta_index_of_node = |nd: usize| gamma_of_node[nd];
    let pi_index_of_node = |nd: usize| gamma_of_node[nd] - delta_nodes.len();

    let mut cells_of = vec![Vec::new(); mesh.num_subdomains()];
    for (ci, cell) in mesh.cells.iter().enumerate() {
        cells_of[cell.subdomain].push(ci);
    }

    let mut subdomains = Vec::with_capacity(mesh.num_subdomains());
    for s in 0..mesh.num_subdomains() {
        let (sx, sy) = (s % ns, s / ns);
        let (x0, x1) = (sx * n, sx * n + n);
        let (y0, y1) = (sy * n, sy * n + n);
        let mut interior = Vec::new();
        let mut dual = Vec::new();
        let mut primal = Vec::new();
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let nd = iy * stride + ix;
                if mesh.boundary_mask[nd] {
                    continue;
                }
                let on_edge = ix == x0 || ix == x1 || iy == y0 || iy == y1;
                if !on_edge {
                    interior.push(nd);
                } else if ix % n == 0 && iy % n == 0 {
                    primal.push(nd);
                } else {
                    dual.push(nd);
                }
            }
        }
        let dual_global: Vec<usize> = dual.iter().map(|&nd| delta_index_of_node(nd)).collect();
        let primal_global: Vec<usize> = primal.iter().map(|&nd| pi_index_of_node(nd)).collect();
        let gamma_global: Vec<usize> = dual
            .iter()
            .chain(primal.iter())
            .map(|&nd| gamma_of_node[nd])
            .collect();
        subdomains.push(SubdomainDofs {
            interior,
            dual,
            primal,
            cells: std::mem::take(&mut cells_of[s]),
            dual_global,
            primal_global,
            gamma_global,
        });
    }

    let mut tilde_offsets = Vec::with_capacity(subdomains.len());
    let mut off = 0;
    for sd in &subdomains {
        tilde_offsets.push(off);
        off += sd.n_dual();
    }

    DofPartition {
        delta_nodes,
        pi_nodes,
        gamma_of_node,
        subdomains,
        tilde_offsets,
        n_dual_copies: off,
    }
}
