//! Coarse preconditioner `M_G⁻¹ = P̂ (P̂ᵀ Â P̂)⁻¹ P̂ᵀ` with `P̂ = W Q P`.
//!
//! `W` groups DOFs grain by grain and then interface by interface, `Q`
//! collapses interface DOFs onto mortar coefficients, and `P` extends mortar
//! coefficients harmonically into the grains (shape columns, matrix `B`)
//! and adds one particular solution per loaded grain (correction columns,
//! matrix `C`). `B` depends only on `Â` and the decomposition; `C` is rebuilt
//! for every right-hand side.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::fem::{FemSystem, NO_NODE};
use crate::mortar::MortarSpace;
use crate::sparse::{CsrMatrix, LinearOperator, SparseCholesky};

/// Permutation `W` with `x_original = W x_grouped`.
#[derive(Debug, Clone, PartialEq)]
pub struct Permutation {
    /// grouped index → original DOF
    pub forward: Vec<usize>,
    /// original DOF → grouped index
    pub inverse: Vec<usize>,
    /// start of each grain's block (length `n_grains + 1`)
    pub grain_offsets: Vec<usize>,
    /// start of each interface's block (length `n_interfaces + 1`)
    pub interface_offsets: Vec<usize>,
}

impl Permutation {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn n_grain_dofs(&self) -> usize {
        *self.grain_offsets.last().unwrap()
    }

    pub fn grain_dofs(&self, g: usize) -> &[usize] {
        &self.forward[self.grain_offsets[g]..self.grain_offsets[g + 1]]
    }

    pub fn interface_dofs(&self, c: usize) -> &[usize] {
        &self.forward[self.interface_offsets[c]..self.interface_offsets[c + 1]]
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `W[original, grouped] = 1`.
    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.len();
        let t: Vec<_> = self.forward.iter().enumerate().map(|(g, &o)| (o, g, 1.0)).collect();
        CsrMatrix::from_triplets(n, n, &t)
    }
}

/// Group DOFs: every grain's owned DOFs (components, then ascending nodes),
/// followed by every interface's DOFs in the same layout.
pub fn build_permutation(dec: &Decomposition, sys: &FemSystem) -> Result<Permutation> {
    let mesh = &sys.mesh;
    let dim = mesh.dim;
    let iface_of = dec.interface_of_node();
    let owner = dec.owner_grain_of_node();
    let mut grain_nodes: Vec<Vec<usize>> = vec![Vec::new(); dec.n_grains];
    for n in 0..mesh.n_nodes() {
        if iface_of[n] == NO_NODE {
            grain_nodes[owner[n]].push(n);
        }
    }
    let mut forward = Vec::with_capacity(mesh.n_dof());
    let mut grain_offsets = vec![0];
    for nodes in &grain_nodes {
        for c in 0..dim {
            forward.extend(nodes.iter().map(|&n| mesh.dof(n, c)));
        }
        grain_offsets.push(forward.len());
    }
    let mut interface_offsets = vec![forward.len()];
    for iface in &dec.interfaces {
        for c in 0..dim {
            forward.extend(iface.nodes.iter().map(|&n| mesh.dof(n, c)));
        }
        interface_offsets.push(forward.len());
    }
    let mut inverse = vec![NO_NODE; mesh.n_dof()];
    for (g, &o) in forward.iter().enumerate() {
        inverse[o] = g;
    }
    if let Some(d) = inverse.iter().position(|&i| i == NO_NODE) {
        return Err(Error::UnassignedDof(d));
    }
    Ok(Permutation {
        forward,
        inverse,
        grain_offsets,
        interface_offsets,
    })
}

/// Reduction `Q = diag(I, Q^o)` with one dense mortar block per interface.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub n_grain_dofs: usize,
    /// start of each interface's mortar columns, after the grain identity block
    pub mortar_offsets: Vec<usize>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl Reduction {
    pub fn nrows(&self) -> usize {
        self.n_grain_dofs + self.blocks.iter().map(|b| b.nrows()).sum::<usize>()
    }

    pub fn ncols(&self) -> usize {
        self.n_grain_dofs + self.n_mortar_dofs()
    }

    pub fn n_mortar_dofs(&self) -> usize {
        *self.mortar_offsets.last().unwrap()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut t: Vec<_> = (0..self.n_grain_dofs).map(|i| (i, i, 1.0)).collect();
        let mut row0 = self.n_grain_dofs;
        for (c, b) in self.blocks.iter().enumerate() {
            let col0 = self.n_grain_dofs + self.mortar_offsets[c];
            for r in 0..b.nrows() {
                for k in 0..b.ncols() {
                    if b[(r, k)] != 0.0 {
                        t.push((row0 + r, col0 + k, b[(r, k)]));
                    }
                }
            }
            row0 += b.nrows();
        }
        CsrMatrix::from_triplets(self.nrows(), self.ncols(), &t)
    }
}

/// Numerical rank of a dense block (relative singular-value threshold).
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rtol * top).count()
}

pub fn build_reduction(ms: &MortarSpace, perm: &Permutation) -> Result<Reduction> {
    let mut mortar_offsets = vec![0];
    let mut blocks = Vec::with_capacity(ms.blocks.len());
    for (c, b) in ms.blocks.iter().enumerate() {
        let rows = perm.interface_offsets[c + 1] - perm.interface_offsets[c];
        if b.matrix.nrows() != rows {
            return Err(Error::Dimension(format!(
                "mortar block {c} has {} rows, interface has {rows} dofs",
                b.matrix.nrows()
            )));
        }
        if numerical_rank(&b.matrix, 1e-13) < b.matrix.ncols() {
            return Err(Error::RankDeficientInterface { interface: b.interface });
        }
        blocks.push(b.matrix.clone());
        mortar_offsets.push(mortar_offsets[c] + b.matrix.ncols());
    }
    Ok(Reduction {
        n_grain_dofs: perm.n_grain_dofs(),
        mortar_offsets,
        blocks,
    })
}

/// Right-hand-side independent part of the coarse space.
pub struct CoarseBasis {
    pub perm: Permutation,
    pub reduction: Reduction,
    grain_factors: Vec<SparseCholesky>,
    /// `B` in grouped grain rows (`N^f_g × N^m D`)
    pub basis: CsrMatrix,
    /// `W Q [B; I]`: shape columns in original DOF numbering
    shape: CsrMatrix,
    a_shape: CsrMatrix,
    btab: DMatrix<f64>,
    /// grains touched by each shape column
    pub shape_support: Vec<Vec<usize>>,
    pub build_seconds: f64,
}

impl CoarseBasis {
    pub fn build(sys: &FemSystem, dec: &Decomposition, ms: &MortarSpace) -> Result<Self> {
        let t0 = Instant::now();
        let a = &sys.a;
        let perm = build_permutation(dec, sys)?;
        let reduction = build_reduction(ms, &perm)?;
        let ng = dec.n_grains;
        let mut grain_factors = Vec::with_capacity(ng);
        for g in 0..ng {
            let dofs = perm.grain_dofs(g);
            let ag = a.submatrix(dofs, dofs);
            let f = SparseCholesky::factor(&ag).map_err(|e| Error::SingularGrain {
                grain: g,
                msg: e.to_string(),
            })?;
            grain_factors.push(f);
        }
        // grain of each grouped grain row
        let n_fg = perm.n_grain_dofs();
        let mut grain_of_row = vec![0usize; n_fg];
        for g in 0..ng {
            for r in perm.grain_offsets[g]..perm.grain_offsets[g + 1] {
                grain_of_row[r] = g;
            }
        }
        let n_md = reduction.n_mortar_dofs();
        let mut b_trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut shape_support = vec![Vec::new(); n_md];
        for c in 0..dec.n_interfaces() {
            let idofs = perm.interface_dofs(c);
            // grains whose owned DOFs couple to this interface
            let mut coupled: Vec<usize> = Vec::new();
            for &d in idofs {
                for &col in a.row(d).0 {
                    let p = perm.inverse[col];
                    if p < n_fg {
                        let g = grain_of_row[p];
                        if !coupled.contains(&g) {
                            coupled.push(g);
                        }
                    }
                }
            }
            coupled.sort_unstable();
            let block = &reduction.blocks[c];
            for &g in &coupled {
                let gd = perm.grain_dofs(g);
                let agc = a.submatrix(gd, idofs);
                for k in 0..block.ncols() {
                    let q: Vec<f64> = block.column(k).iter().cloned().collect();
                    let mut rhs = agc.mul_vec(&q);
                    rhs.iter_mut().for_each(|v| *v = -*v);
                    grain_factors[g].solve_in_place(&mut rhs);
                    let col = reduction.mortar_offsets[c] + k;
                    let mut any = false;
                    for (i, &v) in rhs.iter().enumerate() {
                        if v != 0.0 {
                            b_trip.push((perm.grain_offsets[g] + i, col, v));
                            any = true;
                        }
                    }
                    if any {
                        shape_support[col].push(g);
                    }
                }
            }
        }
        let basis = CsrMatrix::from_triplets(n_fg, n_md, &b_trip);
        // [B; I] then W Q
        let mut pb_trip = b_trip.clone();
        for k in 0..n_md {
            pb_trip.push((n_fg + k, k, 1.0));
        }
        let p_shape = CsrMatrix::from_triplets(n_fg + n_md, n_md, &pb_trip);
        let shape = perm.to_csr().matmul(&reduction.to_csr().matmul(&p_shape));
        let a_shape = a.matmul(&shape);
        let btab = shape.transpose().matmul(&a_shape).to_dense();
        Ok(Self {
            perm,
            reduction,
            grain_factors,
            basis,
            shape,
            a_shape,
            btab,
            shape_support,
            build_seconds: t0.elapsed().as_secs_f64(),
        })
    }

    pub fn n_grains(&self) -> usize {
        self.grain_factors.len()
    }

    pub fn n_mortar_dofs(&self) -> usize {
        self.reduction.n_mortar_dofs()
    }

    /// Complete the coarse space for right-hand side `b` and factor `A°`.
    pub fn with_rhs(&self, a: &CsrMatrix, b: &[f64]) -> Result<CoarsePreconditioner> {
        let t0 = Instant::now();
        let n = a.nrows();
        assert_eq!(b.len(), n);
        let n_md = self.n_mortar_dofs();
        let mut c_trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut correction_grains = Vec::new();
        for g in 0..self.n_grains() {
            let gd = self.perm.grain_dofs(g);
            let bg: Vec<f64> = gd.iter().map(|&d| b[d]).collect();
            if bg.iter().all(|&v| v == 0.0) {
                continue;
            }
            let x = self.grain_factors[g].solve(&bg);
            let col = correction_grains.len();
            for (i, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    c_trip.push((gd[i], col, v));
                }
            }
            correction_grains.push(g);
        }
        let nc = correction_grains.len();
        let corr = CsrMatrix::from_triplets(n, nc, &c_trip);
        let a_corr = a.matmul(&corr);
        let st = self.shape.transpose();
        let ct = corr.transpose();
        let btac = st.matmul(&a_corr).to_dense();
        let ctab = ct.matmul(&self.a_shape).to_dense();
        let ctac = ct.matmul(&a_corr).to_dense();
        let m = n_md + nc;
        let mut ao = DMatrix::zeros(m, m);
        ao.view_mut((0, 0), (n_md, n_md)).copy_from(&self.btab);
        ao.view_mut((0, n_md), (n_md, nc)).copy_from(&btac);
        ao.view_mut((n_md, 0), (nc, n_md)).copy_from(&ctab);
        ao.view_mut((n_md, n_md), (nc, nc)).copy_from(&ctac);
        // full prolongation [shape | correction]
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(self.shape.nnz() + corr.nnz());
        for r in 0..n {
            let (cols, vals) = self.shape.row(r);
            trip.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, c, v)));
            let (cols, vals) = corr.row(r);
            trip.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, n_md + c, v)));
        }
        let p_hat = CsrMatrix::from_triplets(n, m, &trip);
        let sym = (&ao + ao.transpose()) * 0.5;
        let chol = Cholesky::new(sym).ok_or_else(|| {
            Error::CoarseFactorization(format!("coarse matrix of size {m} is not positive definite"))
        })?;
        Ok(CoarsePreconditioner {
            r_hat: p_hat.transpose(),
            p_hat,
            coarse: ao,
            chol,
            correction_grains,
            n_mortar_dofs: n_md,
            build_seconds: self.build_seconds + t0.elapsed().as_secs_f64(),
        })
    }
}

pub struct CoarsePreconditioner {
    pub p_hat: CsrMatrix,
    pub r_hat: CsrMatrix,
    /// `A° = R̂ Â P̂` as assembled (before symmetrization)
    pub coarse: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// grains that received a correction column, in column order
    pub correction_grains: Vec<usize>,
    pub n_mortar_dofs: usize,
    pub build_seconds: f64,
}

impl CoarsePreconditioner {
    /// Build basis and right-hand-side part in one go.
    pub fn build(sys: &FemSystem, dec: &Decomposition, ms: &MortarSpace) -> Result<Self> {
        CoarseBasis::build(sys, dec, ms)?.with_rhs(&sys.a, &sys.b)
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.nrows()
    }

    /// `(A°)⁻¹ y` in coarse coordinates.
    pub fn coarse_solve(&self, y: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(y);
        self.chol.solve(&v).iter().cloned().collect()
    }

    /// Spectral condition number of the (symmetrized) coarse matrix.
    pub fn condition_number(&self) -> f64 {
        let sym = (&self.coarse + self.coarse.transpose()) * 0.5;
        let ev = SymmetricEigen::new(sym).eigenvalues;
        let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// max |A° − A°ᵀ| / max |A°|
    pub fn relative_asymmetry(&self) -> f64 {
        let d = &self.coarse - self.coarse.transpose();
        d.amax() / self.coarse.amax()
    }
}

impl LinearOperator for CoarsePreconditioner {
    fn dim(&self) -> usize {
        self.p_hat.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let r = self.r_hat.mul_vec(x);
        let z = self.coarse_solve(&r);
        self.p_hat.mul_vec_into(&z, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::cartesian_decompose;
    use crate::fem::{assemble, LoadCase, MaterialParams};
    use crate::image_io::SolidImage;
    use crate::mortar::{MortarConfig, MortarKind};

    fn strip(nx: usize, ny: usize, blocks: [usize; 3]) -> (FemSystem, Decomposition) {
        let img = SolidImage::from_mask([nx, ny, 1], &vec![true; nx * ny]).unwrap();
        let sys = assemble(&img, &MaterialParams::default(), &LoadCase::Shear.boundary_conditions(2)).unwrap();
        let dec = cartesian_decompose(&img, blocks).unwrap().inherit_boundary_conditions(&sys);
        (sys, dec)
    }

    #[test]
    fn permutation_is_orthogonal() {
        let (sys, dec) = strip(9, 6, [3, 2, 1]);
        let w = build_permutation(&dec, &sys).unwrap().to_csr();
        let wwt = w.matmul(&w.transpose());
        assert_eq!(wwt.to_dense(), DMatrix::identity(sys.n_dof(), sys.n_dof()));
    }

    #[test]
    fn capped_mortars_recover_the_solution() {
        let (sys, dec) = strip(10, 5, [2, 1, 1]);
        let cfg = MortarConfig {
            kind: MortarKind::Gaussian { beta: 4.0 },
            n: 1000,
            seed: 1,
        };
        let ms = MortarSpace::build(&dec, &sys, &cfg).unwrap();
        let mg = CoarsePreconditioner::build(&sys, &dec, &ms).unwrap();
        let x = mg.apply(&sys.b);
        let exact = sys.solve_direct().unwrap();
        let err = x.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nrm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / nrm < 1e-8, "{}", err / nrm);
    }

    #[test]
    fn matches_dense_formula() {
        let (sys, dec) = strip(8, 4, [2, 1, 1]);
        let cfg = MortarConfig {
            n: 2,
            ..Default::default()
        };
        let ms = MortarSpace::build(&dec, &sys, &cfg).unwrap();
        let mg = CoarsePreconditioner::build(&sys, &dec, &ms).unwrap();
        let p = mg.p_hat.to_dense();
        let a = sys.a.to_dense();
        let ao = p.transpose() * &a * &p;
        let dense = &p * ao.try_inverse().unwrap() * p.transpose();
        let op = crate::sparse::to_dense(&mg);
        assert!((&op - &dense).amax() / dense.amax() < 1e-10);
        assert!(mg.relative_asymmetry() < 1e-10);
    }
}
