//! Right-preconditioned GMRES and error-propagation spectra.

use std::time::Instant;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm, FnOperator, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmresConfig {
    /// relative tolerance on the true residual `‖b − Âx‖ / ‖b‖`
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 300,
        }
    }
}

/// Wall-clock split in seconds: coarse build, smoother build, GMRES self-time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_mg: f64,
    pub t_ml: f64,
    pub t_sol: f64,
    pub t_tot: f64,
}

impl Timings {
    pub fn new(t_mg: f64, t_ml: f64, t_sol: f64) -> Self {
        Self {
            t_mg,
            t_ml,
            t_sol,
            t_tot: t_mg + t_ml + t_sol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionerInfo {
    pub kind: String,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub smoother: Option<String>,
    pub n_st: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// relative true residual, starting with the initial guess
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub tol: f64,
    pub timings: Timings,
    pub preconditioner: Option<PreconditionerInfo>,
}

impl SolveReport {
    /// Set the build times and recompute the total.
    pub fn with_build_times(mut self, t_mg: f64, t_ml: f64) -> Self {
        self.timings = Timings::new(t_mg, t_ml, self.timings.t_sol);
        self
    }

    pub fn with_preconditioner(mut self, info: PreconditionerInfo) -> Self {
        self.preconditioner = Some(info);
        self
    }
}

/// Full (unrestarted) GMRES with right preconditioning, `Â M⁻¹ y = b`,
/// `x = x0 + M⁻¹ V y`. The preconditioned vectors are stored, so `m` may
/// differ between iterations. Convergence is decided on the true residual.
pub fn gmres<A, M>(a: &A, m: &M, b: &[f64], x0: Option<&[f64]>, cfg: &GmresConfig) -> Result<(Vec<f64>, SolveReport)>
where
    A: LinearOperator + ?Sized,
    M: LinearOperator + ?Sized,
{
    let t0 = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    let x0: Vec<f64> = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let denom = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut r = a.apply(&x0);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let beta = norm(&r);
    let mut residuals = vec![beta / denom];
    if !beta.is_finite() {
        return Err(Error::NonFinite("initial residual".into()));
    }
    let tol = cfg.tol;
    let report = |x: Vec<f64>, converged: bool, residual_history: Vec<f64>| {
        let final_residual = *residual_history.last().unwrap();
        (
            x,
            SolveReport {
                converged,
                iterations: residual_history.len() - 1,
                residual_history,
                final_residual,
                tol,
                timings: Timings::new(0.0, 0.0, t0.elapsed().as_secs_f64()),
                preconditioner: None,
            },
        )
    };
    if beta / denom < cfg.tol {
        return Ok(report(x0, true, residuals));
    }
    let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new(); // column j has j + 2 entries
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut x = x0.clone();
    let mut w = vec![0.0; n];
    for j in 0..cfg.max_iter {
        let zj = m.apply(&v[j]);
        a.apply_into(&zj, &mut w);
        z.push(zj);
        let mut col = vec![0.0; j + 2];
        // modified Gram-Schmidt, two passes
        for _ in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] += hij;
                axpy(-hij, vi, &mut w);
            }
        }
        let hn = norm(&w);
        col[j + 1] = hn;
        if !hn.is_finite() || col.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("Arnoldi vector at iteration {}", j + 1)));
        }
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let rho = col[j].hypot(col[j + 1]);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
        cs.push(c);
        sn.push(s);
        col[j] = rho;
        col[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        // current iterate and its true residual
        let k = j + 1;
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[l][i] * y[l];
            }
            y[i] = s / h[i][i];
        }
        x.copy_from_slice(&x0);
        for (zi, yi) in z.iter().zip(&y) {
            axpy(*yi, zi, &mut x);
        }
        a.apply_into(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let res = norm(&r) / denom;
        if !res.is_finite() {
            return Err(Error::NonFinite(format!("residual at iteration {k}")));
        }
        residuals.push(res);
        if res < cfg.tol {
            return Ok(report(x, true, residuals));
        }
        if hn == 0.0 {
            // invariant subspace reached without meeting the tolerance
            return Ok(report(x, false, residuals));
        }
        v.push(w.iter().map(|x| x / hn).collect());
    }
    Ok(report(x, false, residuals))
}

/// `E = I − M Â`.
pub fn error_propagation<'a, A, M>(a: &'a A, m: &'a M) -> FnOperator<impl Fn(&[f64], &mut [f64]) + 'a>
where
    A: LinearOperator + ?Sized,
    M: LinearOperator + ?Sized,
{
    let n = a.dim();
    FnOperator::new(n, move |x: &[f64], y: &mut [f64]| {
        let ax = a.apply(x);
        m.apply_into(&ax, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub spectral_radius: f64,
    /// Ritz values as (re, im), largest modulus first
    pub ritz_values: Vec<(f64, f64)>,
    pub krylov_dim: usize,
    pub converged: bool,
}

/// Eigenvalues of a dense real matrix, largest modulus first.
fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let mut ev: Vec<Complex<f64>> = f
        .eigenvalues()
        .map_err(|e| Error::EigenNonConvergence(format!("{e:?}")))?
        .into_iter()
        .map(|c| Complex::new(c.re, c.im))
        .collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(ev)
}

/// Largest-modulus eigenvalue of `op` by Arnoldi with a growing Krylov
/// dimension; stops when the estimate changes by less than `tol` (relative)
/// between dimensions, at an invariant subspace, or at the full dimension.
pub fn spectral_radius<O: LinearOperator + ?Sized>(op: &O, tol: f64, seed: u64) -> Result<Spectrum> {
    let n = op.dim();
    if n == 0 {
        return Ok(Spectrum {
            spectral_radius: 0.0,
            ritz_values: Vec::new(),
            krylov_dim: 0,
            converged: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm(&v0);
    v0.iter_mut().for_each(|x| *x /= nv);
    let mut v = vec![v0];
    let mut hcols: Vec<Vec<f64>> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut next_check = 20.min(n);
    loop {
        let j = hcols.len();
        op.apply_into(&v[j], &mut w);
        let mut col = vec![0.0; j + 2];
        for _ in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] += hij;
                axpy(-hij, vi, &mut w);
            }
        }
        let hn = norm(&w);
        if !hn.is_finite() {
            return Err(Error::NonFinite("Arnoldi vector".into()));
        }
        col[j + 1] = hn;
        hcols.push(col);
        let k = j + 1;
        let breakdown = hn <= 1e-14 * hcols.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
        if k == next_check || breakdown || k == n {
            let mut h = DMatrix::zeros(k, k);
            for (c, col) in hcols.iter().enumerate() {
                for (r, &val) in col.iter().enumerate().take(k) {
                    h[(r, c)] = val;
                }
            }
            let ev = eigenvalues(&h)?;
            let rho = ev.first().map(|c| c.norm()).unwrap_or(0.0);
            let exact = breakdown || k == n;
            let settled = (rho - prev).abs() <= tol * rho.max(1e-300);
            if exact || settled {
                return Ok(Spectrum {
                    spectral_radius: rho,
                    ritz_values: ev.iter().take(200).map(|c| (c.re, c.im)).collect(),
                    krylov_dim: k,
                    converged: true,
                });
            }
            prev = rho;
            next_check = (next_check + next_check / 2 + 10).min(n);
            if k >= 600.min(n) && n > 2500 {
                return Ok(Spectrum {
                    spectral_radius: rho,
                    ritz_values: ev.iter().take(200).map(|c| (c.re, c.im)).collect(),
                    krylov_dim: k,
                    converged: false,
                });
            }
        }
        v.push(w.iter().map(|x| x / hn).collect());
    }
}

/// Leading eigenvalues of `E = (I − M_L Â)(I − M_G Â)`. At most `m` Ritz
/// values are returned, largest modulus first.
pub fn error_propagation_spectrum<A, G, L>(a: &A, mg: &G, ml: &L, m: usize, seed: u64) -> Result<Spectrum>
where
    A: LinearOperator + ?Sized,
    G: LinearOperator + ?Sized,
    L: LinearOperator + ?Sized,
{
    let n = a.dim();
    let e = FnOperator::new(n, |x: &[f64], y: &mut [f64]| {
        let mut t = a.apply(x);
        let u = mg.apply(&t);
        let e1: Vec<f64> = x.iter().zip(&u).map(|(p, q)| p - q).collect();
        a.apply_into(&e1, &mut t);
        ml.apply_into(&t, y);
        for (yi, ei) in y.iter_mut().zip(&e1) {
            *yi = ei - *yi;
        }
    });
    let mut s = spectral_radius(&e, 1e-10, seed)?;
    s.ritz_values.truncate(m);
    Ok(s)
}

/// Spectral radius from a dense eigen-decomposition; reference for small systems.
pub fn dense_spectral_radius<O: LinearOperator + ?Sized>(op: &O) -> Result<f64> {
    let ev = eigenvalues(&crate::sparse::to_dense(op))?;
    Ok(ev.first().map(|c| c.norm()).unwrap_or(0.0))
}
