//! Local smoothers and their combination with the coarse preconditioner.
//!
//! All smoothers act on the constrained system `Â`. Dirichlet rows are
//! decoupled diagonal rows, so they are left out of the subdomain solves and
//! inverted exactly by a diagonal term instead.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decomposition::{vertex_neighbors, Decomposition};
use crate::error::{Error, Result};
use crate::fem::{FemSystem, NO_NODE};
use crate::sparse::{CsrMatrix, LinearOperator, SparseCholesky};

/// Exact solve on a principal submatrix, extended by zero.
pub struct Subdomain {
    pub dofs: Vec<usize>,
    factor: SparseCholesky,
}

impl Subdomain {
    pub fn new(a: &CsrMatrix, mut dofs: Vec<usize>, id: usize) -> Result<Self> {
        dofs.sort_unstable();
        dofs.dedup();
        let sub = a.submatrix(&dofs, &dofs);
        let factor = SparseCholesky::factor(&sub).map_err(|e| Error::SingularSubdomain {
            subdomain: id,
            msg: e.to_string(),
        })?;
        Ok(Self { dofs, factor })
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// y += R^T A_s^{-1} R x
    pub fn add_apply(&self, x: &[f64], y: &mut [f64]) {
        let mut r: Vec<f64> = self.dofs.iter().map(|&d| x[d]).collect();
        self.factor.solve_in_place(&mut r);
        for (&d, v) in self.dofs.iter().zip(r) {
            y[d] += v;
        }
    }
}

/// Additive Schwarz sum over subdomains plus the exact inverse on the
/// constrained diagonal.
pub struct AdditiveSchwarz {
    n: usize,
    pub subdomains: Vec<Subdomain>,
    constrained: Vec<(usize, f64)>,
}

impl AdditiveSchwarz {
    pub fn new(sys: &FemSystem, subdomain_dofs: Vec<Vec<usize>>, include_constrained: bool) -> Result<Self> {
        let mut subdomains = Vec::with_capacity(subdomain_dofs.len());
        for (i, dofs) in subdomain_dofs.into_iter().enumerate() {
            let dofs: Vec<usize> = dofs.into_iter().filter(|&d| !sys.constrained[d]).collect();
            if !dofs.is_empty() {
                subdomains.push(Subdomain::new(&sys.a, dofs, i)?);
            }
        }
        let constrained = if include_constrained {
            (0..sys.n_dof())
                .filter(|&d| sys.constrained[d])
                .map(|d| (d, 1.0 / sys.a.get(d, d)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            n: sys.n_dof(),
            subdomains,
            constrained,
        })
    }
}

impl LinearOperator for AdditiveSchwarz {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for s in &self.subdomains {
            s.add_apply(x, y);
        }
        for &(d, inv) in &self.constrained {
            y[d] += inv * x[d];
        }
    }
}

fn node_dofs(sys: &FemSystem, nodes: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mesh = &sys.mesh;
    let mut out: Vec<usize> = nodes
        .into_iter()
        .flat_map(|n| (0..mesh.dim).map(move |c| mesh.dof(n, c)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn element_set_dofs(sys: &FemSystem, elements: &[usize]) -> Vec<usize> {
    let mesh = &sys.mesh;
    let nn = mesh.nodes_per_element();
    node_dofs(
        sys,
        elements.iter().flat_map(|&e| mesh.element_nodes(e).into_iter().take(nn)),
    )
}

/// DOFs of each grain's nodes that lie on no contact interface. Interface
/// nodes are left to the contact grids, which always contain them.
pub fn grain_subdomains(sys: &FemSystem, dec: &Decomposition) -> Vec<Vec<usize>> {
    let iface_of = dec.interface_of_node();
    let owner = dec.owner_grain_of_node();
    let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); dec.n_grains];
    for n in 0..sys.mesh.n_nodes() {
        if iface_of[n] == NO_NODE {
            nodes[owner[n]].push(n);
        }
    }
    nodes.into_iter().map(|ns| node_dofs(sys, ns)).collect()
}

/// DOFs of every node of each contact grid.
pub fn contact_subdomains(sys: &FemSystem, dec: &Decomposition) -> Vec<Vec<usize>> {
    dec.contact_grids.iter().map(|els| element_set_dofs(sys, els)).collect()
}

/// Grains grown by `overlap` layers of vertex-adjacent elements.
pub fn dilated_grain_subdomains(sys: &FemSystem, dec: &Decomposition, overlap: usize) -> Vec<Vec<usize>> {
    let mesh = &sys.mesh;
    let mut mark = vec![false; mesh.n_elements()];
    dec.grain_elements()
        .iter()
        .map(|els| {
            let mut set = els.clone();
            for &e in &set {
                mark[e] = true;
            }
            let mut front = set.clone();
            for _ in 0..overlap {
                let mut next = Vec::new();
                for &e in &front {
                    for f in vertex_neighbors(mesh, e) {
                        if !mark[f] {
                            mark[f] = true;
                            next.push(f);
                        }
                    }
                }
                set.extend_from_slice(&next);
                front = next;
            }
            for &e in &set {
                mark[e] = false;
            }
            element_set_dofs(sys, &set)
        })
        .collect()
}

/// `M_CG = M_ζ + M_g (I − Â M_ζ)`: contact grids first, then grains.
pub struct ContactGrainSmoother<'a> {
    a: &'a CsrMatrix,
    pub grains: AdditiveSchwarz,
    pub contacts: AdditiveSchwarz,
}

impl<'a> ContactGrainSmoother<'a> {
    pub fn new(sys: &'a FemSystem, dec: &Decomposition) -> Result<Self> {
        Ok(Self {
            a: &sys.a,
            grains: AdditiveSchwarz::new(sys, grain_subdomains(sys, dec), true)?,
            contacts: AdditiveSchwarz::new(sys, contact_subdomains(sys, dec), false)?,
        })
    }
}

impl LinearOperator for ContactGrainSmoother<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let z = self.contacts.apply(x);
        let az = self.a.mul_vec(&z);
        let r: Vec<f64> = x.iter().zip(&az).map(|(a, b)| a - b).collect();
        self.grains.apply_into(&r, y);
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi += zi;
        }
    }
}

/// Incomplete LU with level-of-fill `k`, stored as one CSR matrix holding the
/// unit lower factor (strictly below the diagonal) and `U`.
pub struct Ilu {
    lu: CsrMatrix,
    diag: Vec<usize>,
    pub level: usize,
}

impl Ilu {
    pub fn new(a: &CsrMatrix, level: usize) -> Result<Self> {
        let n = a.nrows();
        // symbolic phase: rows of (column, level), ascending columns
        let mut pattern: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
        let mut diag_pos: Vec<usize> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row: BTreeMap<usize, usize> = a.row(i).0.iter().map(|&j| (j, 0)).collect();
            row.insert(i, 0);
            let mut k_iter = row.range(..i).next().map(|(&k, _)| k);
            while let Some(k) = k_iter {
                let lik = row[&k];
                let pk = &pattern[k];
                for &(j, lkj) in &pk[diag_pos[k] + 1..] {
                    let lev = lik + lkj + 1;
                    if lev <= level {
                        let e = row.entry(j).or_insert(lev);
                        if lev < *e {
                            *e = lev;
                        }
                    }
                }
                k_iter = row.range(k + 1..i).next().map(|(&k, _)| k);
            }
            let r: Vec<(usize, usize)> = row.into_iter().collect();
            diag_pos.push(r.iter().position(|&(j, _)| j == i).unwrap());
            pattern.push(r);
        }
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        for (i, r) in pattern.iter().enumerate() {
            indices.extend(r.iter().map(|&(j, _)| j));
            indptr[i + 1] = indices.len();
        }
        let diag: Vec<usize> = (0..n).map(|i| indptr[i] + diag_pos[i]).collect();
        drop(pattern);
        // numeric phase (IKJ)
        let mut data = vec![0.0; indices.len()];
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (indptr[i], indptr[i + 1]);
            for p in s..e {
                pos[indices[p]] = p;
            }
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                data[pos[j]] = v;
            }
            for p in s..diag[i] {
                let k = indices[p];
                let lik = data[p] / data[diag[k]];
                data[p] = lik;
                for q in diag[k] + 1..indptr[k + 1] {
                    let t = pos[indices[q]];
                    if t != usize::MAX {
                        data[t] -= lik * data[q];
                    }
                }
            }
            let piv = data[diag[i]];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            for p in s..e {
                pos[indices[p]] = usize::MAX;
            }
        }
        let lu = CsrMatrix::from_parts(n, n, indptr, indices, data);
        Ok(Self { lu, diag, level })
    }

    pub fn nnz(&self) -> usize {
        self.lu.nnz()
    }
}

impl LinearOperator for Ilu {
    fn dim(&self) -> usize {
        self.lu.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        let (ip, ix, d) = (self.lu.indptr(), self.lu.indices(), self.lu.data());
        y.copy_from_slice(x);
        for i in 0..n {
            let mut s = y[i];
            for p in ip[i]..self.diag[i] {
                s -= d[p] * y[ix[p]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in self.diag[i] + 1..ip[i + 1] {
                s -= d[p] * y[ix[p]];
            }
            y[i] = s / d[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSmoother {
    ContactGrain,
    Ilu { k: usize },
    /// overlapping grains without contact grids, a GDSW-like baseline
    DilatedGrains { overlap: usize },
}

impl Default for BaseSmoother {
    fn default() -> Self {
        BaseSmoother::ContactGrain
    }
}

impl BaseSmoother {
    pub fn default_stages(&self) -> usize {
        match self {
            BaseSmoother::Ilu { .. } => 6,
            _ => 1,
        }
    }
}

pub enum Base<'a> {
    ContactGrain(ContactGrainSmoother<'a>),
    Ilu(Ilu),
    Dilated(AdditiveSchwarz),
}

impl LinearOperator for Base<'_> {
    fn dim(&self) -> usize {
        match self {
            Base::ContactGrain(s) => s.dim(),
            Base::Ilu(s) => s.dim(),
            Base::Dilated(s) => s.dim(),
        }
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Base::ContactGrain(s) => s.apply_into(x, y),
            Base::Ilu(s) => s.apply_into(x, y),
            Base::Dilated(s) => s.apply_into(x, y),
        }
    }
}

/// `n_st` stationary sweeps of a base smoother from a zero initial guess.
pub struct LocalSmoother<'a> {
    a: &'a CsrMatrix,
    pub base: Base<'a>,
    pub stages: usize,
    pub setup_seconds: f64,
}

impl<'a> LocalSmoother<'a> {
    pub fn new(sys: &'a FemSystem, dec: &Decomposition, kind: BaseSmoother, stages: usize) -> Result<Self> {
        if stages == 0 {
            return Err(Error::param("stages", "need at least one smoothing stage"));
        }
        let t0 = Instant::now();
        let base = match kind {
            BaseSmoother::ContactGrain => Base::ContactGrain(ContactGrainSmoother::new(sys, dec)?),
            BaseSmoother::Ilu { k } => Base::Ilu(Ilu::new(&sys.a, k)?),
            BaseSmoother::DilatedGrains { overlap } => {
                Base::Dilated(AdditiveSchwarz::new(sys, dilated_grain_subdomains(sys, dec, overlap), true)?)
            }
        };
        Ok(Self {
            a: &sys.a,
            base,
            stages,
            setup_seconds: t0.elapsed().as_secs_f64(),
        })
    }
}

impl LinearOperator for LocalSmoother<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply_into(x, y);
        let mut r = vec![0.0; x.len()];
        let mut dy = vec![0.0; x.len()];
        for _ in 1..self.stages {
            self.a.mul_vec_into(y, &mut r);
            for (ri, xi) in r.iter_mut().zip(x) {
                *ri = xi - *ri;
            }
            self.base.apply_into(&r, &mut dy);
            for (yi, d) in y.iter_mut().zip(&dy) {
                *yi += d;
            }
        }
    }
}

/// `M = M_G + M_L (I − Â M_G)`: coarse correction followed by smoothing.
pub struct TwoLevel<'a, G: LinearOperator, L: LinearOperator> {
    a: &'a CsrMatrix,
    pub coarse: G,
    pub local: L,
}

impl<'a, G: LinearOperator, L: LinearOperator> TwoLevel<'a, G, L> {
    pub fn new(a: &'a CsrMatrix, coarse: G, local: L) -> Self {
        Self { a, coarse, local }
    }
}

impl<G: LinearOperator, L: LinearOperator> LinearOperator for TwoLevel<'_, G, L> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let z = self.coarse.apply(x);
        let az = self.a.mul_vec(&z);
        let r: Vec<f64> = x.iter().zip(&az).map(|(a, b)| a - b).collect();
        self.local.apply_into(&r, y);
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi += zi;
        }
    }
}
