//! Mortar nodes and mortar functions on contact interfaces.
//!
//! A mortar block for an interface with `N_f` fine nodes and `N_m` mortar
//! nodes is a dense `(N_f·D) × (N_m·D)` matrix. Rows follow the global
//! component-blocked convention (`row = comp * N_f + i`), columns are grouped
//! per mortar node (`col = m * D + γ`).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{ContactInterface, Decomposition};
use crate::error::{Error, Result};
use crate::fem::FemSystem;

const MAX_SWEEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MortarKind {
    Gaussian { beta: f64 },
    Algebraic,
}

impl Default for MortarKind {
    fn default() -> Self {
        MortarKind::Gaussian { beta: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MortarConfig {
    pub kind: MortarKind,
    /// requested mortar nodes per interface, capped at the fine-node count
    pub n: usize,
    pub seed: u64,
}

impl Default for MortarConfig {
    fn default() -> Self {
        Self {
            kind: MortarKind::default(),
            n: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InterfaceMortars {
    pub interface: usize,
    /// mortar-node positions as indices into the interface node list
    pub nodes: Vec<usize>,
    pub matrix: DMatrix<f64>,
    /// true if the requested `n` exceeded the fine-node count
    pub capped: bool,
}

impl InterfaceMortars {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone)]
pub struct MortarSpace {
    pub kind: MortarKind,
    pub dim: usize,
    pub blocks: Vec<InterfaceMortars>,
}

impl MortarSpace {
    /// Mortars for every interface of `dec` (which should already have
    /// inherited the boundary conditions of `sys`).
    pub fn build(dec: &Decomposition, sys: &FemSystem, cfg: &MortarConfig) -> Result<Self> {
        if cfg.n == 0 {
            return Err(Error::param("n", "need at least one mortar node per interface"));
        }
        let dim = sys.dim();
        let blocks = dec
            .interfaces
            .iter()
            .map(|iface| {
                let seed = cfg.seed ^ (iface.id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let nodes = place_mortar_nodes(iface, cfg.n, seed)?;
                let mut block = match cfg.kind {
                    MortarKind::Gaussian { beta } => gaussian_mortars(iface, &nodes, beta, dim)?,
                    MortarKind::Algebraic => {
                        let k = interface_block(sys, iface);
                        algebraic_mortars(iface, &nodes, &k, dim)?
                    }
                };
                block.capped = cfg.n > iface.len();
                Ok(block)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: cfg.kind,
            dim,
            blocks,
        })
    }

    pub fn total_columns(&self) -> usize {
        self.blocks.iter().map(|b| b.matrix.ncols()).sum()
    }
}

/// Dense interface block `A^c_c` in component-blocked row order.
pub fn interface_block(sys: &FemSystem, iface: &ContactInterface) -> DMatrix<f64> {
    let dim = sys.dim();
    let dofs: Vec<usize> = (0..dim)
        .flat_map(|c| iface.nodes.iter().map(move |&n| (c, n)))
        .map(|(c, n)| sys.mesh.dof(n, c))
        .collect();
    sys.a.submatrix(&dofs, &dofs).to_dense()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn potential(y: &[f64; 3], others: impl Iterator<Item = [f64; 3]>) -> f64 {
    others.map(|x| 1.0 / dist(y, &x)).sum()
}

/// Electrostatic-style placement of `n` mortar nodes on the fine nodes of
/// `iface`. Returns indices into `iface.nodes`.
pub fn place_mortar_nodes(iface: &ContactInterface, n: usize, seed: u64) -> Result<Vec<usize>> {
    let f = &iface.positions;
    let nf = f.len();
    if nf == 0 {
        return Err(Error::EmptyInterface(iface.id));
    }
    if n == 0 {
        return Err(Error::param("n", "need at least one mortar node"));
    }
    if n >= nf {
        return Ok((0..nf).collect());
    }
    if n == 1 {
        let mut c = [0.0; 3];
        for p in f {
            for a in 0..3 {
                c[a] += p[a] / nf as f64;
            }
        }
        let best = (0..nf)
            .min_by(|&a, &b| dist(&f[a], &c).total_cmp(&dist(&f[b], &c)).then(a.cmp(&b)))
            .unwrap();
        return Ok(vec![best]);
    }
    let (mut i0, mut i1, mut dmax) = (0, 1, -1.0);
    for a in 0..nf {
        for b in a + 1..nf {
            let d = dist(&f[a], &f[b]);
            if d > dmax {
                (i0, i1, dmax) = (a, b, d);
            }
        }
    }
    let mut chosen = vec![i0, i1];
    let mut used = vec![false; nf];
    used[i0] = true;
    used[i1] = true;
    while chosen.len() < n {
        let best = argmin_potential(f, &used, chosen.iter().copied(), None);
        used[best] = true;
        chosen.push(best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _sweep in 0..MAX_SWEEPS {
        order.shuffle(&mut rng);
        let mut moved = false;
        for &slot in &order {
            let cur = chosen[slot];
            used[cur] = false;
            let others = chosen.iter().enumerate().filter(|&(s, _)| s != slot).map(|(_, &c)| c);
            let best = argmin_potential(f, &used, others, Some(cur));
            used[best] = true;
            if best != cur {
                chosen[slot] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(chosen)
}

/// Free fine node minimizing Σ 1/‖y − x_j‖ over `others`; `keep` wins ties.
fn argmin_potential(
    f: &[[f64; 3]],
    used: &[bool],
    others: impl Iterator<Item = usize> + Clone,
    keep: Option<usize>,
) -> usize {
    let pot = |y: usize| potential(&f[y], others.clone().map(|j| f[j]));
    let mut best = keep.unwrap_or(usize::MAX);
    let mut best_val = keep.map(pot).unwrap_or(f64::INFINITY);
    for y in 0..f.len() {
        if used[y] || Some(y) == keep {
            continue;
        }
        let v = pot(y);
        if v < best_val * (1.0 - 1e-12) || best == usize::MAX {
            best = y;
            best_val = v;
        }
    }
    best
}

/// Gaussian mortar values `η_m(x)` at every fine node, one row per fine node.
pub fn gaussian_weights(positions: &[[f64; 3]], nodes: &[usize], beta: f64, interface: usize) -> Result<DMatrix<f64>> {
    if !(beta > 0.0) {
        return Err(Error::param("beta", "must be positive"));
    }
    let nm = nodes.len();
    let nf = positions.len();
    let mut w = DMatrix::zeros(nf, nm);
    if nm == 1 {
        w.fill(1.0);
        return Ok(w);
    }
    let spread: Vec<f64> = (0..nm)
        .map(|i| {
            let dmin = (0..nm)
                .filter(|&j| j != i)
                .map(|j| dist(&positions[nodes[i]], &positions[nodes[j]]))
                .fold(f64::INFINITY, f64::min);
            beta * dmin * dmin
        })
        .collect();
    if spread.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::CoincidentMortarNodes(interface));
    }
    let mut logs = vec![0.0; nm];
    for x in 0..nf {
        for i in 0..nm {
            logs[i] = -dist(&positions[x], &positions[nodes[i]]).powi(2) / spread[i];
        }
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        for i in 0..nm {
            w[(x, i)] = (logs[i] - top).exp() / sum;
        }
    }
    Ok(w)
}

pub fn gaussian_mortars(iface: &ContactInterface, nodes: &[usize], beta: f64, dim: usize) -> Result<InterfaceMortars> {
    let w = gaussian_weights(&iface.positions, nodes, beta, iface.id)?;
    let nf = iface.len();
    let nm = nodes.len();
    let mut m = DMatrix::zeros(nf * dim, nm * dim);
    for g in 0..dim {
        for x in 0..nf {
            for i in 0..nm {
                m[(g * nf + x, i * dim + g)] = w[(x, i)];
            }
        }
    }
    Ok(InterfaceMortars {
        interface: iface.id,
        nodes: nodes.to_vec(),
        matrix: m,
        capped: false,
    })
}

/// Mortars from the interface block `k` (component-blocked, `N_f·D` square).
///
/// The block is first corrected by its nodal block row sums so that rigid
/// translations of the interface lie in its kernel; each mortar column then
/// solves the corrected system with unit/zero values imposed at the mortar
/// nodes.
pub fn algebraic_mortars(iface: &ContactInterface, nodes: &[usize], k: &DMatrix<f64>, dim: usize) -> Result<InterfaceMortars> {
    let nf = iface.len();
    let nm = nodes.len();
    assert_eq!(k.nrows(), nf * dim);
    let mut kc = k.clone();
    for i in 0..nf {
        for d in 0..dim {
            for g in 0..dim {
                let s: f64 = (0..nf).map(|j| k[(d * nf + i, g * nf + j)]).sum();
                kc[(d * nf + i, g * nf + i)] -= s;
            }
        }
    }
    let mut is_mortar = vec![false; nf];
    for &m in nodes {
        is_mortar[m] = true;
    }
    let free: Vec<usize> = (0..dim)
        .flat_map(|d| (0..nf).filter(|&i| !is_mortar[i]).map(move |i| d * nf + i))
        .collect();
    let mut m = DMatrix::zeros(nf * dim, nm * dim);
    for (mi, &node) in nodes.iter().enumerate() {
        for g in 0..dim {
            m[(g * nf + node, mi * dim + g)] = 1.0;
        }
    }
    if !free.is_empty() {
        let nfree = free.len();
        let kff = DMatrix::from_fn(nfree, nfree, |r, c| kc[(free[r], free[c])]);
        let lu = kff.lu();
        let scale = kff_scale(&kc);
        if !lu.is_invertible() || lu.u().diagonal().iter().any(|v| v.abs() <= 1e-13 * scale) {
            return Err(Error::SingularInterface { interface: iface.id });
        }
        for (mi, &node) in nodes.iter().enumerate() {
            for g in 0..dim {
                let col = g * nf + node;
                let rhs = DMatrix::from_fn(nfree, 1, |r, _| -kc[(free[r], col)]);
                let x = lu.solve(&rhs).ok_or(Error::SingularInterface { interface: iface.id })?;
                for (r, &fr) in free.iter().enumerate() {
                    m[(fr, mi * dim + g)] = x[(r, 0)];
                }
            }
        }
    }
    Ok(InterfaceMortars {
        interface: iface.id,
        nodes: nodes.to_vec(),
        matrix: m,
        capped: false,
    })
}

fn kff_scale(k: &DMatrix<f64>) -> f64 {
    k.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// Largest deviation from partition of unity over all components.
pub fn partition_of_unity_error(block: &InterfaceMortars, dim: usize) -> f64 {
    let m = &block.matrix;
    let nf = m.nrows() / dim;
    let nm = m.ncols() / dim;
    let mut worst = 0.0f64;
    for g in 0..dim {
        for d in 0..dim {
            for x in 0..nf {
                let s: f64 = (0..nm).map(|i| m[(d * nf + x, i * dim + g)]).sum();
                let target = if d == g { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
    }
    worst
}
