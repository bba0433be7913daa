//! Structured P1 triangulation of the unit square.
//!
//! The domain is divided into `ns × ns` square subdomains, each split into
//! `n × n` squares, and every square into two right triangles along the
//! diagonal from its lower-left to its upper-right corner. Nodes and cells are
//! numbered row-major by (y, x); within a square the lower triangle comes
//! first. Homogeneous Dirichlet nodes on the outer boundary are excluded from
//! the free degrees of freedom.

/// One triangular cell: vertex node ids (counter-clockwise), the subdomain it
/// belongs to, and its centroid. All cells share the same area `h²/2`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub nodes: [usize; 3],
    pub subdomain: usize,
    pub centroid: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    /// Subdomains per side (`N_s`).
    pub ns: usize,
    /// Cells per subdomain side (`n`, so `H/h = n`).
    pub n: usize,
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    pub boundary_mask: Vec<bool>,
    /// Free (non-Dirichlet) node ids, ascending.
    pub free_nodes: Vec<usize>,
    /// Free-dof index of each node, `usize::MAX` on the boundary.
    pub free_index: Vec<usize>,
}

impl Mesh {
    /// Grid points per side minus one (`N_s · n`).
    pub fn cells_per_side(&self) -> usize {
        self.ns * self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.cells_per_side() as f64)
    }

    /// Area of every triangle (`h²/2`).
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        0.5 * h * h
    }

    pub fn num_subdomains(&self) -> usize {
        self.ns * self.ns
    }

    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    /// Grid coordinates `(ix, iy)` of a node id.
    pub fn node_grid(&self, node: usize) -> (usize, usize) {
        let stride = self.cells_per_side() + 1;
        (node % stride, node / stride)
    }

    /// Cell ids of one subdomain, ascending.
    pub fn subdomain_cells(&self, s: usize) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.subdomain == s)
            .map(|(i, _)| i)
            .collect()
    }

    /// For each node, the ids of the cells touching it.
    pub fn node_to_cells(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (ci, cell) in self.cells.iter().enumerate() {
            for &nd in &cell.nodes {
                inc[nd].push(ci);
            }
        }
        inc
    }
}

/// Build the structured triangulation.
pub fn build_mesh(ns: usize, n: usize) -> Mesh {
    assert!(ns >= 1 && n >= 1, "ns and n must be positive");
    let grid = ns * n;
    let stride = grid + 1;
    let h = 1.0 / grid as f64;

    let mut nodes = Vec::with_capacity(stride * stride);
    for iy in 0..stride {
        for ix in 0..stride {
            nodes.push([ix as f64 * h, iy as f64 * h]);
        }
    }

    let mut cells = Vec::with_capacity(2 * grid * grid);
    for iy in 0..grid {
        for ix in 0..grid {
            let n00 = iy * stride + ix;
            let n10 = n00 + 1;
            let n01 = n00 + stride;
            let n11 = n01 + 1;
            let sub = (iy / n) * ns + ix / n;
            let (x0, y0) = (ix as f64 * h, iy as f64 * h);
            // diagonal from lower-left to upper-right
            cells.push(Cell {
                nodes: [n00, n10, n11],
                subdomain: sub,
                centroid: [x0 + 2.0 * h / 3.0, y0 + h / 3.0],
            });
            cells.push(Cell {
                nodes: [n00, n11, n01],
                subdomain: sub,
                centroid: [x0 + h / 3.0, y0 + 2.0 * h / 3.0],
            });
        }
    }

    let mut boundary_mask = vec![false; nodes.len()];
    for iy in 0..stride {
        for ix in 0..stride {
            if ix == 0 || iy == 0 || ix == grid || iy == grid {
                boundary_mask[iy * stride + ix] = true;
            }
        }
    }

    let mut free_nodes = Vec::new();
    let mut free_index = vec![usize::MAX; nodes.len()];
    for (nd, &b) in boundary_mask.iter().enumerate() {
        if !b {
            free_index[nd] = free_nodes.len();
            free_nodes.push(nd);
        }
    }

    Mesh {
        ns,
        n,
        nodes,
        cells,
        boundary_mask,
        free_nodes,
        free_index,
    }
}

/// The manufactured right-hand side `f = 2π² sin(πx) sin(πy)`.
pub fn forcing(x: f64, y: f64) -> f64 {
    2.0 * std::f64::consts::PI.powi(2)
        * (std::f64::consts::PI * x).sin()
        * (std::f64::consts::PI * y).sin()
}

/// Load vector `F_s = ∫ φ_s f dx` over the free dofs, via the 3-point
/// edge-midpoint rule (exact for quadratic integrands).
pub fn load_vector(mesh: &Mesh) -> Vec<f64> {
    load_vector_with(mesh, forcing)
}

pub fn load_vector_with(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_free()];
    let third = mesh.cell_area() / 3.0;
    for cell in &mesh.cells {
        let p: Vec<[f64; 2]> = cell.nodes.iter().map(|&nd| mesh.nodes[nd]).collect();
        let mids = [
            [(p[0][0] + p[1][0]) / 2.0, (p[0][1] + p[1][1]) / 2.0],
            [(p[1][0] + p[2][0]) / 2.0, (p[1][1] + p[2][1]) / 2.0],
            [(p[2][0] + p[0][0]) / 2.0, (p[2][1] + p[0][1]) / 2.0],
        ];
        let fv: Vec<f64> = mids.iter().map(|m| f(m[0], m[1])).collect();
        // φ_s = 1/2 at the two midpoints of the edges adjacent to vertex s
        let contrib = [
            third * (fv[0] + fv[2]) / 2.0,
            third * (fv[0] + fv[1]) / 2.0,
            third * (fv[1] + fv[2]) / 2.0,
        ];
        for (k, &nd) in cell.nodes.iter().enumerate() {
            let fi = mesh.free_index[nd];
            if fi != usize::MAX {
                out[fi] += contrib[k];
            }
        }
    }
    out
}

/// Squared L² norm of a P1 function given by nodal values over all nodes,
/// computed with the consistent element mass matrix.
pub fn l2_norm_sq(mesh: &Mesh, nodal: &[f64]) -> f64 {
    assert_eq!(nodal.len(), mesh.nodes.len());
    let scale = mesh.cell_area() / 12.0;
    let mut total = 0.0;
    for cell in &mesh.cells {
        let v = [
            nodal[cell.nodes[0]],
            nodal[cell.nodes[1]],
            nodal[cell.nodes[2]],
        ];
        let s = v[0] + v[1] + v[2];
        // vᵀ M v with M = area/12 · (I + 11ᵀ)
        total += scale * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + s * s);
    }
    total
}
