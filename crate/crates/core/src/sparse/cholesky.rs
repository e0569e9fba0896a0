//! Envelope (skyline) Cholesky factorization with RCM reordering.
//!
//! Every local system in the preconditioner (grain blocks, contact-grid
//! blocks, whole-system reference solves) is a principal submatrix of the
//! SPD system matrix, so a plain LLᵀ without pivoting is sufficient.

use super::{ordering::reverse_cuthill_mckee, CsrMatrix};
use crate::error::{Error, Result};

/// Pivots below this fraction of the original diagonal are treated as singular.
const PIVOT_RTOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// first stored column of each (permuted) row
    first: Vec<usize>,
    /// offset of row i's envelope in `values`
    start: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols());
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // envelope of the lower triangle in permuted numbering
        let mut first: Vec<usize> = (0..n).collect();
        for old_r in 0..n {
            let r = inv[old_r];
            for &old_c in a.row(old_r).0 {
                let c = inv[old_c];
                let (hi, lo) = if r >= c { (r, c) } else { (c, r) };
                if lo < first[hi] {
                    first[hi] = lo;
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut values = vec![0.0; total];
        let mut diag = vec![0.0; n];
        for old_r in 0..n {
            let r = inv[old_r];
            let (cols, vals) = a.row(old_r);
            for (&old_c, &v) in cols.iter().zip(vals) {
                let c = inv[old_c];
                if c <= r {
                    values[start[r] + c - first[r]] = v;
                }
                if c == r {
                    diag[r] = v;
                }
            }
        }
        // row-oriented envelope factorization
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let mut s = values[si + j - fi];
                let ri = &values[si + k0 - fi..si + j - fi];
                let rj = &values[sj + k0 - fj..sj + j - fj];
                s -= dot(ri, rj);
                values[si + j - fi] = s / values[sj + j - fj];
            }
            let row = &values[si..si + i - fi];
            let d = values[si + i - fi] - dot(row, row);
            let scale = diag[i].abs().max(f64::MIN_POSITIVE);
            if !(d > PIVOT_RTOL * scale) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    row: perm[i],
                    pivot: d,
                });
            }
            values[si + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored envelope entries (a proxy for factor memory).
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.solve_permuted(&mut y);
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    fn solve_permuted(&self, y: &mut [f64]) {
        let n = self.n;
        // L z = y
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let s = y[i] - dot(&self.values[si..si + i - fi], &y[fi..i]);
            y[i] = s / self.values[si + i - fi];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = y[i] / self.values[si + i - fi];
            y[i] = xi;
            for (k, &l) in self.values[si..si + i - fi].iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}
