//! k-way spectral partitioning: eigenvectors of the normalized graph
//! Laplacian of the element graph, clustered with k-means.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Decomposition, Method};
use crate::error::{Error, Result};
use crate::fem::Mesh;
use crate::image_io::SolidImage;
use crate::sparse::{CsrMatrix, SparseCholesky};

/// Graphs up to this many elements use a dense eigensolver.
const DENSE_LIMIT: usize = 1500;
const SHIFT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralParams {
    pub k: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            kmeans_restarts: 8,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Element graph with face adjacency weighted by the harmonic mean of ξ.
fn element_graph(mesh: &Mesh) -> CsrMatrix {
    let mut t = Vec::new();
    for e in 0..mesh.n_elements() {
        for f in mesh.element_face_neighbors(e) {
            let (a, b) = (mesh.xi[e], mesh.xi[f]);
            t.push((e, f, 2.0 * a * b / (a + b)));
        }
    }
    let n = mesh.n_elements();
    CsrMatrix::from_triplets(n, n, &t)
}

pub fn spectral_decompose(img: &SolidImage, params: &SpectralParams) -> Result<Decomposition> {
    let mesh = Mesh::new(img);
    let n = mesh.n_elements();
    let k = params.k;
    if k == 0 {
        return Err(Error::param("k", "need at least one grain"));
    }
    if k > n {
        return Err(Error::param("k", format!("k = {k} exceeds the {n} solid elements")));
    }
    if k == 1 {
        return Decomposition::from_element_labels(Method::Spectral, mesh, vec![0; n], true);
    }
    let w = element_graph(&mesh);
    let deg: Vec<f64> = (0..n).map(|r| w.row(r).1.iter().sum()).collect();
    let dinv: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    // L = I - D^-1/2 W D^-1/2
    let mut t = Vec::with_capacity(w.nnz() + n);
    for r in 0..n {
        t.push((r, r, 1.0));
        let (cols, vals) = w.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            t.push((r, c, -v * dinv[r] * dinv[c]));
        }
    }
    let lap = CsrMatrix::from_triplets(n, n, &t);
    // trivial eigenvector D^1/2 1
    let mut triv: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
    let tn = triv.iter().map(|v| v * v).sum::<f64>().sqrt();
    triv.iter_mut().for_each(|v| *v /= tn);
    let vecs = if n <= DENSE_LIMIT {
        dense_smallest(&lap, &triv, k)
    } else {
        subspace_smallest(&lap, &triv, k, params)?
    };
    let features: Vec<Vec<f64>> = (0..n)
        .map(|i| vecs.iter().map(|v| v[i] * dinv[i]).collect())
        .collect();
    let labels = kmeans(&features, k, params.seed, params.kmeans_restarts);
    Decomposition::from_element_labels(Method::Spectral, mesh, labels, true)
}

/// `k` smallest eigenvectors of `L` orthogonal to `triv`.
fn dense_smallest(lap: &CsrMatrix, triv: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = lap.nrows();
    let mut m = lap.to_dense();
    // push the trivial mode above the spectrum of L, which lies in [0, 2]
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += 10.0 * triv[i] * triv[j];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    idx[..k]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().cloned().collect())
        .collect()
}

fn orthonormalize(block: &mut [Vec<f64>], against: &[f64]) {
    for j in 0..block.len() {
        for _pass in 0..2 {
            let d: f64 = block[j].iter().zip(against).map(|(a, b)| a * b).sum();
            block[j].iter_mut().zip(against).for_each(|(a, b)| *a -= d * b);
            for i in 0..j {
                let (lo, hi) = block.split_at_mut(j);
                let d: f64 = hi[0].iter().zip(&lo[i]).map(|(a, b)| a * b).sum();
                hi[0].iter_mut().zip(&lo[i]).for_each(|(a, b)| *a -= d * b);
            }
        }
        let nrm = block[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            block[j].iter_mut().for_each(|v| *v /= nrm);
        }
    }
}

/// Shift-invert block subspace iteration with Rayleigh-Ritz.
fn subspace_smallest(lap: &CsrMatrix, triv: &[f64], k: usize, params: &SpectralParams) -> Result<Vec<Vec<f64>>> {
    let n = lap.nrows();
    let p = (2 * k).max(k + 8).min(n - 1);
    let mut shifted = lap.clone();
    for r in 0..n {
        let (lo, hi) = (shifted.indptr()[r], shifted.indptr()[r + 1]);
        let pos = lo + shifted.indices()[lo..hi].binary_search(&r).unwrap();
        shifted.data_mut()[pos] += SHIFT;
    }
    let chol = SparseCholesky::factor(&shifted)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed);
    let mut block: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut block, triv);
    for _it in 0..params.max_iter {
        for v in block.iter_mut() {
            chol.solve_in_place(v);
        }
        orthonormalize(&mut block, triv);
        // Rayleigh-Ritz on L
        let lv: Vec<Vec<f64>> = block.iter().map(|v| lap.mul_vec(v)).collect();
        let mut h = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] = block[i].iter().zip(&lv[j]).map(|(a, b)| a * b).sum();
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let rotate = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
            idx.iter()
                .map(|&c| {
                    let mut out = vec![0.0; n];
                    for (i, s) in src.iter().enumerate() {
                        let w = eig.eigenvectors[(i, c)];
                        out.iter_mut().zip(s).for_each(|(o, x)| *o += w * x);
                    }
                    out
                })
                .collect()
        };
        let new_block = rotate(&block);
        let new_lv = rotate(&lv);
        let mut worst = 0.0f64;
        for j in 0..k {
            let lam = eig.eigenvalues[idx[j]];
            let r: f64 = new_lv[j]
                .iter()
                .zip(&new_block[j])
                .map(|(a, b)| (a - lam * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        block = new_block;
        if worst < params.tol {
            block.truncate(k);
            return Ok(block);
        }
    }
    Err(Error::EigenNonConvergence(format!(
        "normalized Laplacian subspace iteration did not reach {:e} in {} iterations",
        params.tol, params.max_iter
    )))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's k-means with k-means++ seeding; best of `restarts` by inertia.
pub(crate) fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let n = points.len();
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centres: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
        let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centres[0])).collect();
        while centres.len() < k {
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut t = rng.random::<f64>() * total;
                let mut idx = n - 1;
                for (i, &d) in d2.iter().enumerate() {
                    if t < d {
                        idx = i;
                        break;
                    }
                    t -= d;
                }
                idx
            } else {
                rng.random_range(0..n)
            };
            centres.push(points[pick].clone());
            for (i, p) in points.iter().enumerate() {
                d2[i] = d2[i].min(sq_dist(p, &centres[centres.len() - 1]));
            }
        }
        let mut assign = vec![0usize; n];
        for _iter in 0..300 {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let mut bi = 0;
                let mut bd = f64::INFINITY;
                for (c, ctr) in centres.iter().enumerate() {
                    let d = sq_dist(p, ctr);
                    if d < bd {
                        bd = d;
                        bi = c;
                    }
                }
                if assign[i] != bi {
                    assign[i] = bi;
                    changed = true;
                }
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (i, p) in points.iter().enumerate() {
                counts[assign[i]] += 1;
                sums[assign[i]].iter_mut().zip(p).for_each(|(s, x)| *s += x);
            }
            for c in 0..k {
                if counts[c] == 0 {
                    // re-seed an empty cluster at the worst-fit point
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            sq_dist(&points[a], &centres[assign[a]]).total_cmp(&sq_dist(&points[b], &centres[assign[b]]))
                        })
                        .unwrap();
                    centres[c] = points[far].clone();
                    assign[far] = c;
                    changed = true;
                } else {
                    centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points.iter().enumerate().map(|(i, p)| sq_dist(p, &centres[assign[i]])).sum();
        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| (0..n).map(|i| i % k).collect())
}
