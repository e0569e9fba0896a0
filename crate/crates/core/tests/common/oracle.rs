//! Dense reference operators assembled directly from their defining formulas.

use hplmm::coarse::{Permutation, Reduction};
use hplmm::decomposition::Decomposition;
use hplmm::fem::{FemSystem, NO_NODE};
use nalgebra::DMatrix;

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().full_piv_lu().try_inverse().expect("invertible")
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `P̂ = W [[B, C], [Q°, 0]]` with `B = −A_gg⁻¹ A_gc Q°` and one correction
/// column `A_gg⁻¹ b_g` per grain with a nonzero load.
pub fn p_hat(sys: &FemSystem, perm: &Permutation, red: &Reduction) -> DMatrix<f64> {
    let n = sys.n_dof();
    let w = perm.to_csr().to_dense();
    let a = w.transpose() * sys.a.to_dense() * &w;
    let b = w.transpose() * DMatrix::from_column_slice(n, 1, &sys.b);
    let ng = perm.n_grain_dofs();
    let q = red.to_csr().to_dense();
    let qo = q.view((ng, ng), (n - ng, q.ncols() - ng)).into_owned();
    let agg = a.view((0, 0), (ng, ng)).into_owned();
    let agc = a.view((0, ng), (ng, n - ng)).into_owned();
    let agg_inv = inv(&agg);
    let bm = -(&agg_inv * agc * &qo);
    let mut corr: Vec<DMatrix<f64>> = Vec::new();
    for g in 0..perm.grain_offsets.len() - 1 {
        let (s, e) = (perm.grain_offsets[g], perm.grain_offsets[g + 1]);
        let mut bg = DMatrix::zeros(ng, 1);
        for r in s..e {
            bg[(r, 0)] = b[(r, 0)];
        }
        if bg.iter().any(|&v| v != 0.0) {
            corr.push(&agg_inv * bg);
        }
    }
    let nm = qo.ncols();
    let nc = corr.len();
    let mut p = DMatrix::zeros(n, nm + nc);
    p.view_mut((0, 0), (ng, nm)).copy_from(&bm);
    p.view_mut((ng, 0), (n - ng, nm)).copy_from(&qo);
    for (k, c) in corr.iter().enumerate() {
        p.view_mut((0, nm + k), (ng, 1)).copy_from(c);
    }
    w * p
}

/// `P (Pᵀ A P)⁻¹ Pᵀ`
pub fn galerkin(a: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    p * inv(&(p.transpose() * a * p)) * p.transpose()
}

/// `Σ Rᵀ (R A Rᵀ)⁻¹ R` over index sets, plus `1/a_dd` on `diag_dofs`.
pub fn additive_schwarz(a: &DMatrix<f64>, sets: &[Vec<usize>], diag_dofs: &[usize]) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, n);
    for s in sets.iter().filter(|s| !s.is_empty()) {
        let li = inv(&select(a, s, s));
        for (i, &r) in s.iter().enumerate() {
            for (j, &c) in s.iter().enumerate() {
                m[(r, c)] += li[(i, j)];
            }
        }
    }
    for &d in diag_dofs {
        m[(d, d)] += 1.0 / a[(d, d)];
    }
    m
}

/// `M1 + M2 (I − A M1)`
pub fn compose(a: &DMatrix<f64>, m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    m1 + m2 * (DMatrix::identity(n, n) - a * m1)
}

/// Grain DOF sets: free DOFs of nodes on no interface, grouped by the lowest
/// grain among the node's elements.
pub fn grain_sets(sys: &FemSystem, dec: &Decomposition) -> Vec<Vec<usize>> {
    let mesh = &sys.mesh;
    let nn = mesh.nodes_per_element();
    let mut on_iface = vec![false; mesh.n_nodes()];
    for i in &dec.interfaces {
        for &n in &i.nodes {
            on_iface[n] = true;
        }
    }
    let mut owner = vec![NO_NODE; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        for &n in &mesh.element_nodes(e)[..nn] {
            owner[n] = owner[n].min(dec.grain_of_element[e]);
        }
    }
    let mut sets = vec![Vec::new(); dec.n_grains];
    for c in 0..mesh.dim {
        for n in 0..mesh.n_nodes() {
            let d = mesh.dof(n, c);
            if !on_iface[n] && !sys.constrained[d] {
                sets[owner[n]].push(d);
            }
        }
    }
    sets
}

/// Contact-grid DOF sets: free DOFs of every node of the grid's elements.
pub fn contact_sets(sys: &FemSystem, dec: &Decomposition) -> Vec<Vec<usize>> {
    let mesh = &sys.mesh;
    let nn = mesh.nodes_per_element();
    dec.contact_grids
        .iter()
        .map(|grid| {
            let mut nodes: Vec<usize> = grid.iter().flat_map(|&e| mesh.element_nodes(e)[..nn].to_vec()).collect();
            nodes.sort_unstable();
            nodes.dedup();
            let mut dofs: Vec<usize> = (0..mesh.dim)
                .flat_map(|c| nodes.iter().map(move |&n| mesh.dof(n, c)))
                .filter(|&d| !sys.constrained[d])
                .collect();
            dofs.sort_unstable();
            dofs
        })
        .collect()
}

pub fn constrained_dofs(sys: &FemSystem) -> Vec<usize> {
    (0..sys.n_dof()).filter(|&d| sys.constrained[d]).collect()
}
