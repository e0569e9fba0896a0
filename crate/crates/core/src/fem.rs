//! Q1 finite elements on the voxel grid: element matrices, global assembly,
//! Dirichlet elimination and stress recovery.
//!
//! Global DOF numbering is component-blocked: `dof = comp * n_nodes + node`,
//! with FEM nodes numbered lexicographically (x fastest) over the grid nodes
//! that touch at least one solid voxel.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::SolidImage;
use crate::sparse::{CsrMatrix, SparseCholesky};

pub const NO_NODE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            lambda: 8.3e9,
            mu: 44.3e9,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::param("mu", "shear modulus must be positive"));
        }
        if !(self.lambda + 2.0 * self.mu / dim as f64 > 0.0) {
            return Err(Error::param("lambda", "lambda + 2 mu / D must be positive"));
        }
        Ok(())
    }
}

/// Element stiffness for an axis-aligned box with sides `h`, using 2^D-point
/// Gauss quadrature (plane strain in 2D).
///
/// Local ordering is component-blocked like the global one:
/// `local = comp * 2^D + a`, local nodes lexicographic with x fastest.
pub fn element_stiffness(params: &MaterialParams, xi: f64, h: &[f64], dim: usize) -> DMatrix<f64> {
    assert!(dim == 2 || dim == 3);
    let nn = 1usize << dim;
    let nd = nn * dim;
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let vol: f64 = h[..dim].iter().product();
    let w = vol / nn as f64;
    let mut k = DMatrix::zeros(nd, nd);
    let mut grad = vec![[0.0f64; 3]; nn];
    for q in 0..nn {
        let xq: Vec<f64> = (0..dim).map(|d| pts[(q >> d) & 1]).collect();
        for (a, ga) in grad.iter_mut().enumerate() {
            for d in 0..dim {
                let mut v = 1.0 / h[d];
                for e in 0..dim {
                    let bit = (a >> e) & 1;
                    if e == d {
                        v *= if bit == 1 { 1.0 } else { -1.0 };
                    } else {
                        v *= if bit == 1 { xq[e] } else { 1.0 - xq[e] };
                    }
                }
                ga[d] = v;
            }
        }
        for a in 0..nn {
            for b in 0..nn {
                let ga = &grad[a];
                let gb = &grad[b];
                let dd: f64 = (0..dim).map(|d| ga[d] * gb[d]).sum();
                for i in 0..dim {
                    for j in 0..dim {
                        let r = i * nn + a;
                        let c = j * nn + b;
                        if c < r {
                            continue;
                        }
                        let mut v = params.lambda * ga[i] * gb[j] + params.mu * ga[j] * gb[i];
                        if i == j {
                            v += params.mu * dd;
                        }
                        k[(r, c)] += xi * w * v;
                    }
                }
            }
        }
    }
    for r in 0..nd {
        for c in 0..r {
            k[(r, c)] = k[(c, r)];
        }
    }
    k
}

/// Element and node topology of the solid voxels.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    /// voxels per axis (elements per axis of the full grid)
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// voxel index of each element
    pub elements: Vec<usize>,
    /// element id per voxel, `NO_NODE` for void
    pub element_of_voxel: Vec<usize>,
    /// stiffness multiplier per element
    pub xi: Vec<f64>,
    /// FEM node id per grid node, `NO_NODE` if no solid voxel touches it
    pub node_of_grid: Vec<usize>,
    pub grid_of_node: Vec<usize>,
}

impl Mesh {
    pub fn new(img: &SolidImage) -> Self {
        let dim = img.dimensionality;
        let mut elements = Vec::new();
        let mut element_of_voxel = vec![NO_NODE; img.len()];
        let mut xi = Vec::new();
        for v in 0..img.len() {
            if img.is_solid(v) {
                element_of_voxel[v] = elements.len();
                elements.push(v);
                xi.push(img.values[v]);
            }
        }
        let gd = node_grid_dims(img.dims, dim);
        let mut touched = vec![false; gd[0] * gd[1] * gd[2]];
        let mut mesh = Self {
            dim,
            dims: img.dims,
            spacing: img.spacing,
            elements,
            element_of_voxel,
            xi,
            node_of_grid: Vec::new(),
            grid_of_node: Vec::new(),
        };
        for e in 0..mesh.elements.len() {
            for g in mesh.element_grid_nodes(e) {
                touched[g] = true;
            }
        }
        let mut node_of_grid = vec![NO_NODE; touched.len()];
        let mut grid_of_node = Vec::new();
        for (g, &t) in touched.iter().enumerate() {
            if t {
                node_of_grid[g] = grid_of_node.len();
                grid_of_node.push(g);
            }
        }
        mesh.node_of_grid = node_of_grid;
        mesh.grid_of_node = grid_of_node;
        mesh
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.grid_of_node.len()
    }

    pub fn n_dof(&self) -> usize {
        self.dim * self.n_nodes()
    }

    pub fn nodes_per_element(&self) -> usize {
        1 << self.dim
    }

    #[inline]
    pub fn dof(&self, node: usize, comp: usize) -> usize {
        comp * self.n_nodes() + node
    }

    /// `(node, comp)` of a global DOF.
    #[inline]
    pub fn dof_node(&self, dof: usize) -> (usize, usize) {
        (dof % self.n_nodes(), dof / self.n_nodes())
    }

    pub fn node_grid_dims(&self) -> [usize; 3] {
        node_grid_dims(self.dims, self.dim)
    }

    /// Integer grid coordinates of a grid node.
    pub fn grid_coords(&self, g: usize) -> [usize; 3] {
        let gd = self.node_grid_dims();
        [g % gd[0], (g / gd[0]) % gd[1], g / (gd[0] * gd[1])]
    }

    pub fn node_grid_coords(&self, node: usize) -> [usize; 3] {
        self.grid_coords(self.grid_of_node[node])
    }

    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let c = self.node_grid_coords(node);
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    fn element_grid_nodes(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let v = self.elements[e];
        let d = self.dims;
        let (i, j, k) = (v % d[0], (v / d[0]) % d[1], v / (d[0] * d[1]));
        let gd = self.node_grid_dims();
        (0..self.nodes_per_element()).map(move |a| {
            let (di, dj, dk) = (a & 1, (a >> 1) & 1, (a >> 2) & 1);
            (i + di) + gd[0] * ((j + dj) + gd[1] * (k + dk))
        })
    }

    /// FEM nodes of an element in local order.
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let mut out = [NO_NODE; 8];
        for (a, g) in self.element_grid_nodes(e).enumerate() {
            out[a] = self.node_of_grid[g];
        }
        out
    }

    /// Element ids adjacent to element `e` through a shared face.
    pub fn element_face_neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let v = self.elements[e];
        let d = self.dims;
        let (i, j, k) = (v % d[0], (v / d[0]) % d[1], v / (d[0] * d[1]));
        let mut out = [NO_NODE; 6];
        if i > 0 {
            out[0] = v - 1;
        }
        if i + 1 < d[0] {
            out[1] = v + 1;
        }
        if j > 0 {
            out[2] = v - d[0];
        }
        if j + 1 < d[1] {
            out[3] = v + d[0];
        }
        if k > 0 {
            out[4] = v - d[0] * d[1];
        }
        if k + 1 < d[2] {
            out[5] = v + d[0] * d[1];
        }
        out.into_iter()
            .filter(|&w| w != NO_NODE)
            .map(|w| self.element_of_voxel[w])
            .filter(|&e| e != NO_NODE)
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let v = self.elements[e];
        let d = self.dims;
        let c = [v % d[0], (v / d[0]) % d[1], v / (d[0] * d[1])];
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = (c[a] as f64 + 0.5) * self.spacing[a];
        }
        p
    }

    pub fn element_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    /// Lumped nodal volumes (each element spreads its volume evenly over its nodes).
    pub fn nodal_volumes(&self) -> Vec<f64> {
        let share = self.element_volume() / self.nodes_per_element() as f64;
        let mut w = vec![0.0; self.n_nodes()];
        for e in 0..self.n_elements() {
            for &n in &self.element_nodes(e)[..self.nodes_per_element()] {
                w[n] += share;
            }
        }
        w
    }
}

fn node_grid_dims(dims: [usize; 3], dim: usize) -> [usize; 3] {
    if dim == 2 {
        [dims[0] + 1, dims[1] + 1, 1]
    } else {
        [dims[0] + 1, dims[1] + 1, dims[2] + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Face(Face),
    /// explicit grid-node coordinates
    Nodes(Vec<[usize; 3]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    /// prescribed displacement on every component
    Dirichlet([f64; 3]),
    /// zero traction (the default on any boundary not listed)
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub selector: Selector,
    pub kind: BcKind,
}

impl BoundaryCondition {
    pub fn dirichlet(face: Face, value: [f64; 3]) -> Self {
        Self {
            selector: Selector::Face(face),
            kind: BcKind::Dirichlet(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadCase {
    Shear,
    Tension,
}

impl LoadCase {
    /// Standard unit-displacement loadings: in 2D the x = 0 face is driven and
    /// x = Lx clamped; in 3D the y = Ly face is driven and y = 0 fixed.
    pub fn boundary_conditions(self, dim: usize) -> Vec<BoundaryCondition> {
        match (dim, self) {
            (2, LoadCase::Shear) => vec![
                BoundaryCondition::dirichlet(Face::XMin, [0.0, -1.0, 0.0]),
                BoundaryCondition::dirichlet(Face::XMax, [0.0; 3]),
            ],
            (2, LoadCase::Tension) => vec![
                BoundaryCondition::dirichlet(Face::XMin, [-1.0, 0.0, 0.0]),
                BoundaryCondition::dirichlet(Face::XMax, [0.0; 3]),
            ],
            (_, LoadCase::Shear) => vec![
                BoundaryCondition::dirichlet(Face::YMax, [0.0, 0.0, -1.0]),
                BoundaryCondition::dirichlet(Face::YMin, [0.0; 3]),
            ],
            (_, LoadCase::Tension) => vec![
                BoundaryCondition::dirichlet(Face::YMax, [0.0, 1.0, 0.0]),
                BoundaryCondition::dirichlet(Face::YMin, [0.0; 3]),
            ],
        }
    }
}

/// Assembled and constrained linear system.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub mesh: Mesh,
    pub params: MaterialParams,
    /// constrained system matrix (symmetric, nonsingular)
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub constrained: Vec<bool>,
    /// prescribed values on constrained DOFs, zero elsewhere
    pub dirichlet_values: Vec<f64>,
    /// diagonal value used on constrained rows
    pub constraint_scale: f64,
}

impl FemSystem {
    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn n_dof(&self) -> usize {
        self.mesh.n_dof()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dof()).filter(|&d| !self.constrained[d]).collect()
    }

    /// Reference solution by sparse Cholesky.
    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        let f = SparseCholesky::factor(&self.a)?;
        Ok(f.solve(&self.b))
    }

    /// Same matrix, new right-hand side `b` built from a body force and the
    /// current Dirichlet data.
    pub fn with_rhs(&self, b: Vec<f64>) -> Self {
        assert_eq!(b.len(), self.n_dof());
        Self {
            b,
            ..self.clone()
        }
    }
}

/// Unconstrained global stiffness matrix.
pub fn assemble_stiffness(mesh: &Mesh, params: &MaterialParams) -> CsrMatrix {
    let n_nodes = mesh.n_nodes();
    let dim = mesh.dim;
    let nn = mesh.nodes_per_element();
    // node adjacency through shared elements
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        for &a in &nodes[..nn] {
            adj[a].extend_from_slice(&nodes[..nn]);
        }
    }
    for v in adj.iter_mut() {
        v.sort_unstable();
        v.dedup();
    }
    let n_dof = dim * n_nodes;
    let mut indptr = Vec::with_capacity(n_dof + 1);
    let mut indices = Vec::new();
    indptr.push(0);
    for _comp in 0..dim {
        for a in 0..n_nodes {
            for c in 0..dim {
                indices.extend(adj[a].iter().map(|&b| c * n_nodes + b));
            }
            indptr.push(indices.len());
        }
    }
    let mut data = vec![0.0; indices.len()];
    let ke0 = element_stiffness(params, 1.0, &mesh.spacing, dim);
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        let xi = mesh.xi[e];
        for r in 0..nn * dim {
            let (ci, a) = (r / nn, r % nn);
            let row = ci * n_nodes + nodes[a];
            let (lo, hi) = (indptr[row], indptr[row + 1]);
            for c in 0..nn * dim {
                let (cj, b) = (c / nn, c % nn);
                let col = cj * n_nodes + nodes[b];
                let p = lo + indices[lo..hi].binary_search(&col).unwrap();
                data[p] += xi * ke0[(r, c)];
            }
        }
    }
    CsrMatrix::from_parts(n_dof, n_dof, indptr, indices, data)
}

/// Assemble `Â x = b̂` with zero body force.
pub fn assemble(img: &SolidImage, params: &MaterialParams, bcs: &[BoundaryCondition]) -> Result<FemSystem> {
    assemble_with_body_force(img, params, bcs, [0.0; 3])
}

/// Assemble with a constant body force per unit volume.
pub fn assemble_with_body_force(
    img: &SolidImage,
    params: &MaterialParams,
    bcs: &[BoundaryCondition],
    body_force: [f64; 3],
) -> Result<FemSystem> {
    let dim = img.dimensionality;
    params.validate(dim)?;
    let mesh = Mesh::new(img);
    let k = assemble_stiffness(&mesh, params);
    let n_dof = mesh.n_dof();
    let n_nodes = mesh.n_nodes();
    let mut rhs = vec![0.0; n_dof];
    if body_force.iter().any(|&f| f != 0.0) {
        let share = mesh.element_volume() / mesh.nodes_per_element() as f64;
        for e in 0..mesh.n_elements() {
            for &n in &mesh.element_nodes(e)[..mesh.nodes_per_element()] {
                for c in 0..dim {
                    rhs[c * n_nodes + n] += body_force[c] * share;
                }
            }
        }
    }
    let mut constrained = vec![false; n_dof];
    let mut values = vec![0.0; n_dof];
    for bc in bcs {
        let BcKind::Dirichlet(u) = bc.kind else {
            continue;
        };
        for node in select_nodes(&mesh, &bc.selector)? {
            for c in 0..dim {
                let d = c * n_nodes + node;
                constrained[d] = true;
                values[d] = u[c];
            }
        }
    }
    check_attachment(img, &mesh, &constrained)?;

    let free_diag: Vec<f64> = (0..n_dof)
        .filter(|&d| !constrained[d])
        .map(|d| k.get(d, d))
        .collect();
    let scale = if free_diag.is_empty() {
        1.0
    } else {
        free_diag.iter().sum::<f64>() / free_diag.len() as f64
    };
    // lift: b_free -= K_fc u_c; rows/cols of constrained DOFs replaced by scale * I
    let mut b = rhs;
    for r in 0..n_dof {
        if constrained[r] {
            continue;
        }
        let (cols, vals) = k.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if constrained[c] {
                b[r] -= v * values[c];
            }
        }
    }
    let mut indptr = Vec::with_capacity(n_dof + 1);
    let mut indices = Vec::with_capacity(k.nnz());
    let mut data = Vec::with_capacity(k.nnz());
    indptr.push(0);
    for r in 0..n_dof {
        if constrained[r] {
            indices.push(r);
            data.push(scale);
            b[r] = scale * values[r];
        } else {
            let (cols, vals) = k.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if !constrained[c] && v != 0.0 {
                    indices.push(c);
                    data.push(v);
                }
            }
        }
        indptr.push(indices.len());
    }
    let a = CsrMatrix::from_parts(n_dof, n_dof, indptr, indices, data);
    Ok(FemSystem {
        mesh,
        params: *params,
        a,
        b,
        constrained,
        dirichlet_values: values,
        constraint_scale: scale,
    })
}

fn select_nodes(mesh: &Mesh, sel: &Selector) -> Result<Vec<usize>> {
    let gd = mesh.node_grid_dims();
    match sel {
        Selector::Face(face) => {
            let (axis, at_max) = match face {
                Face::XMin => (0, false),
                Face::XMax => (0, true),
                Face::YMin => (1, false),
                Face::YMax => (1, true),
                Face::ZMin => (2, false),
                Face::ZMax => (2, true),
            };
            if axis >= mesh.dim {
                return Err(Error::param("selector", format!("face {face:?} does not exist in 2D")));
            }
            let target = if at_max { gd[axis] - 1 } else { 0 };
            Ok((0..mesh.n_nodes())
                .filter(|&n| mesh.node_grid_coords(n)[axis] == target)
                .collect())
        }
        Selector::Nodes(list) => list
            .iter()
            .map(|c| {
                if c[0] >= gd[0] || c[1] >= gd[1] || c[2] >= gd[2] {
                    return Err(Error::param("selector", format!("grid node {c:?} out of range")));
                }
                let g = c[0] + gd[0] * (c[1] + gd[1] * c[2]);
                match mesh.node_of_grid[g] {
                    NO_NODE => Err(Error::param("selector", format!("grid node {c:?} touches no solid voxel"))),
                    n => Ok(n),
                }
            })
            .collect(),
    }
}

/// Each face-connected solid component needs enough fully constrained nodes
/// to suppress its rigid-body modes: two distinct nodes in 2D, three
/// non-collinear nodes in 3D.
fn check_attachment(img: &SolidImage, mesh: &Mesh, constrained: &[bool]) -> Result<()> {
    let (label, count) = img.solid_components();
    let n_nodes = mesh.n_nodes();
    let dim = mesh.dim;
    let fixed = |n: usize| (0..dim).all(|c| constrained[c * n_nodes + n]);
    let mut pinned: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut sizes = vec![0usize; count];
    for e in 0..mesh.n_elements() {
        let comp = label[mesh.elements[e]];
        sizes[comp] += 1;
        for &n in &mesh.element_nodes(e)[..mesh.nodes_per_element()] {
            if fixed(n) && pinned[comp].len() < 64 && !pinned[comp].contains(&n) {
                pinned[comp].push(n);
            }
        }
    }
    for comp in 0..count {
        let pts: Vec<[f64; 3]> = pinned[comp].iter().map(|&n| mesh.node_position(n)).collect();
        let ok = if dim == 2 { pts.len() >= 2 } else { spans_plane(&pts) };
        if !ok {
            return Err(Error::FloatingComponent {
                component: comp,
                elements: sizes[comp],
            });
        }
    }
    Ok(())
}

fn spans_plane(pts: &[[f64; 3]]) -> bool {
    if pts.len() < 3 {
        return false;
    }
    let p0 = pts[0];
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let u = sub(pts[1], p0);
    pts[2..].iter().any(|&p| {
        let v = sub(p, p0);
        let c = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        c.iter().any(|x| x.abs() > 1e-12)
    })
}

/// Cauchy stress at the centre of every element (3×3, plane strain in 2D).
pub fn element_stresses(sys: &FemSystem, x: &[f64]) -> Vec<Matrix3<f64>> {
    let mesh = &sys.mesh;
    let dim = mesh.dim;
    let nn = mesh.nodes_per_element();
    let n_nodes = mesh.n_nodes();
    let h = mesh.spacing;
    // shape-function gradients at the element centre
    let mut grad = vec![[0.0f64; 3]; nn];
    for (a, ga) in grad.iter_mut().enumerate() {
        for d in 0..dim {
            let sign = if (a >> d) & 1 == 1 { 1.0 } else { -1.0 };
            ga[d] = sign / h[d] * 0.5f64.powi(dim as i32 - 1);
        }
    }
    let p = sys.params;
    (0..mesh.n_elements())
        .map(|e| {
            let nodes = mesh.element_nodes(e);
            let mut du = Matrix3::zeros();
            for a in 0..nn {
                for i in 0..dim {
                    let u = x[i * n_nodes + nodes[a]];
                    for j in 0..dim {
                        du[(i, j)] += u * grad[a][j];
                    }
                }
            }
            let eps = (du + du.transpose()) * 0.5;
            let tr = eps.trace();
            (Matrix3::identity() * (p.lambda * tr) + eps * (2.0 * p.mu)) * mesh.xi[e]
        })
        .collect()
}

/// Radius of the largest Mohr circle. In 2D the in-plane tensor is used.
pub fn mohr_radius(s: &Matrix3<f64>, dim: usize) -> f64 {
    if dim == 2 {
        let d = 0.5 * (s[(0, 0)] - s[(1, 1)]);
        (d * d + s[(0, 1)] * s[(1, 0)]).max(0.0).sqrt()
    } else {
        let ev = SymmetricEigen::new(*s).eigenvalues;
        let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        0.5 * (hi - lo)
    }
}

/// Maximum shear stress σ^t per element.
pub fn max_shear_stress(sys: &FemSystem, x: &[f64]) -> Vec<f64> {
    element_stresses(sys, x)
        .iter()
        .map(|s| mohr_radius(s, sys.dim()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn kernel_dim(k: &DMatrix<f64>) -> usize {
        let ev = SymmetricEigen::new(k.clone()).eigenvalues;
        let top = ev.iter().cloned().fold(0.0, f64::max);
        ev.iter().filter(|&&v| v.abs() < 1e-10 * top).count()
    }

    #[test]
    fn element_row_sums_vanish() {
        let p = MaterialParams { lambda: 1.0, mu: 1.0 };
        let k = element_stiffness(&p, 1.0, &[1.0, 1.0], 2);
        assert_eq!(k.nrows(), 8);
        for r in 0..8 {
            // translation in x: first 4 local dofs; y: last 4
            let sx: f64 = (0..4).map(|c| k[(r, c)]).sum();
            let sy: f64 = (4..8).map(|c| k[(r, c)]).sum();
            assert!(sx.abs() < 1e-14 && sy.abs() < 1e-14);
        }
    }

    #[test]
    fn element_scales_with_multiplier() {
        let p = MaterialParams { lambda: 1.0, mu: 1.0 };
        let k1 = element_stiffness(&p, 1.0, &[1.0, 1.0], 2);
        let k2 = element_stiffness(&p, 2.0, &[1.0, 1.0], 2);
        assert_eq!(k2, k1 * 2.0);
    }

    #[test]
    fn element_kernels() {
        let p = MaterialParams { lambda: 8.3e9, mu: 44.3e9 };
        let k2 = element_stiffness(&p, 1.0, &[1.0, 1.0], 2);
        assert_eq!(kernel_dim(&k2), 3);
        let ev = SymmetricEigen::new(k2).eigenvalues;
        assert_eq!(ev.iter().filter(|&&v| v > 1.0).count(), 5);
        let k3 = element_stiffness(&p, 1.0, &[1.0, 0.5, 2.0], 3);
        assert_eq!(kernel_dim(&k3), 6);
    }

    #[test]
    fn mohr_examples() {
        let mut s = Matrix3::zeros();
        s[(0, 0)] = 2.0;
        assert!((mohr_radius(&s, 2) - 1.0).abs() < 1e-15);
        assert!((mohr_radius(&s, 3) - 1.0).abs() < 1e-15);
        let mut t = Matrix3::zeros();
        t[(0, 1)] = 3.0;
        t[(1, 0)] = 3.0;
        assert!((mohr_radius(&t, 2) - 3.0).abs() < 1e-15);
        assert!((mohr_radius(&t, 3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn floating_component_is_rejected() {
        // two separate bars, only the left one touches x = 0
        let mut mask = vec![false; 6 * 3];
        for i in 0..2 {
            mask[i] = true;
        }
        for i in 4..6 {
            mask[i + 12] = true;
        }
        let img = SolidImage::from_mask([6, 3, 1], &mask).unwrap();
        let bcs = vec![BoundaryCondition::dirichlet(Face::XMin, [0.0; 3])];
        let err = assemble(&img, &MaterialParams::default(), &bcs).unwrap_err();
        assert!(matches!(err, Error::FloatingComponent { component: 1, elements: 2 }));
    }

    #[test]
    fn bad_material_rejected() {
        let p = MaterialParams { lambda: 1.0, mu: 0.0 };
        assert!(p.validate(2).is_err());
        let p = MaterialParams { lambda: -2.0, mu: 1.0 };
        assert!(p.validate(2).is_err());
    }
}
