//! Error metrics against a reference solution and run summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{max_shear_stress, FemSystem};
use crate::krylov::SolveReport;

/// Pointwise and volume-averaged error of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    /// `‖χ_M − χ_S‖ / sup ‖χ_S‖` per point
    pub pointwise: Vec<f64>,
    /// RMS of the pointwise error weighted by point volume, in percent
    pub e2_percent: f64,
    pub max_pointwise: f64,
}

/// `approx` and `exact` hold `ncomp` values per point, point-major.
/// `volumes` weights the points (nodal or element volumes).
pub fn l2_error(approx: &[f64], exact: &[f64], ncomp: usize, volumes: &[f64]) -> Result<FieldError> {
    let npts = volumes.len();
    if approx.len() != exact.len() || exact.len() != npts * ncomp {
        return Err(Error::Dimension(format!(
            "field lengths {} and {} do not match {npts} points × {ncomp}",
            approx.len(),
            exact.len()
        )));
    }
    let mag = |f: &[f64], p: usize| (0..ncomp).map(|c| f[p * ncomp + c].powi(2)).sum::<f64>().sqrt();
    let sup = (0..npts).map(|p| mag(exact, p)).fold(0.0, f64::max);
    if sup == 0.0 || !sup.is_finite() {
        return Err(Error::param("exact", "reference field is identically zero"));
    }
    let pointwise: Vec<f64> = (0..npts)
        .map(|p| {
            (0..ncomp)
                .map(|c| (approx[p * ncomp + c] - exact[p * ncomp + c]).powi(2))
                .sum::<f64>()
                .sqrt()
                / sup
        })
        .collect();
    let vol: f64 = volumes.iter().sum();
    let e2 = (pointwise.iter().zip(volumes).map(|(e, v)| e * e * v).sum::<f64>() / vol).sqrt();
    let max_pointwise = pointwise.iter().cloned().fold(0.0, f64::max);
    Ok(FieldError {
        pointwise,
        e2_percent: 100.0 * e2,
        max_pointwise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// displacement error at nodes, percent
    pub e2_u: f64,
    /// maximum-shear-stress error at element centres, percent
    pub e2_sigma: f64,
    pub max_ep_u: f64,
    pub max_ep_sigma: f64,
    /// what the approximation was compared against
    pub reference: String,
    #[serde(skip)]
    pub ep_u: Vec<f64>,
    #[serde(skip)]
    pub ep_sigma: Vec<f64>,
}

/// Compare a displacement vector with the reference one on the same system.
pub fn error_report(sys: &FemSystem, approx: &[f64], exact: &[f64]) -> Result<ErrorReport> {
    let mesh = &sys.mesh;
    let dim = mesh.dim;
    let nn = mesh.n_nodes();
    let point_major = |x: &[f64]| -> Vec<f64> {
        (0..nn).flat_map(|n| (0..dim).map(move |c| x[c * nn + n])).collect()
    };
    let u = l2_error(&point_major(approx), &point_major(exact), dim, &mesh.nodal_volumes())?;
    let sa = max_shear_stress(sys, approx);
    let se = max_shear_stress(sys, exact);
    let ev = vec![mesh.element_volume(); mesh.n_elements()];
    let s = l2_error(&sa, &se, 1, &ev)?;
    Ok(ErrorReport {
        e2_u: u.e2_percent,
        e2_sigma: s.e2_percent,
        max_ep_u: u.max_pointwise,
        max_ep_sigma: s.max_pointwise,
        reference: "sparse direct solve".into(),
        ep_u: u.pointwise,
        ep_sigma: s.pointwise,
    })
}

/// One row of a run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub domain: String,
    pub load: String,
    pub n: usize,
    pub smoother: String,
    pub solve: SolveReport,
    pub error: Option<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub domain: String,
    pub load: String,
    pub n: usize,
    pub smoother: String,
    pub converged: bool,
    pub iterations: usize,
    pub t_mg: f64,
    pub t_ml: f64,
    pub t_sol: f64,
    pub t_tot: f64,
    pub e2_u: Option<f64>,
    pub e2_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

/// Tabulate runs sorted by domain, load, smoother and n.
pub fn summarize_run(records: &[RunRecord]) -> Summary {
    let mut rows: Vec<SummaryRow> = records
        .iter()
        .map(|r| SummaryRow {
            domain: r.domain.clone(),
            load: r.load.clone(),
            n: r.n,
            smoother: r.smoother.clone(),
            converged: r.solve.converged,
            iterations: r.solve.iterations,
            t_mg: r.solve.timings.t_mg,
            t_ml: r.solve.timings.t_ml,
            t_sol: r.solve.timings.t_sol,
            t_tot: r.solve.timings.t_tot,
            e2_u: r.error.as_ref().map(|e| e.e2_u),
            e2_sigma: r.error.as_ref().map(|e| e.e2_sigma),
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.domain, &a.load, &a.smoother, a.n).cmp(&(&b.domain, &b.load, &b.smoother, b.n))
    });
    Summary { rows }
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("domain,load,smoother,n,converged,iterations,t_mg,t_ml,t_sol,t_tot,e2_u,e2_sigma\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                r.domain,
                r.load,
                r.smoother,
                r.n,
                r.converged,
                r.iterations,
                r.t_mg,
                r.t_ml,
                r.t_sol,
                r.t_tot,
                opt(r.e2_u),
                opt(r.e2_sigma)
            ));
        }
        s
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<14} {:<8} {:<14} {:>3} {:>5} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9}\n",
            "domain", "load", "smoother", "n", "iters", "T_MG", "T_ML", "T_sol", "T_tot", "E2_u%", "E2_sig%"
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:9.3}")).unwrap_or_else(|| format!("{:>9}", "-"));
        for r in &self.rows {
            let it = if r.converged { r.iterations.to_string() } else { format!("{}*", r.iterations) };
            s.push_str(&format!(
                "{:<14} {:<8} {:<14} {:>3} {:>5} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {} {}\n",
                r.domain, r.load, r.smoother, r.n, it, r.t_mg, r.t_ml, r.t_sol, r.t_tot, opt(r.e2_u), opt(r.e2_sigma)
            ));
        }
        s
    }
}
