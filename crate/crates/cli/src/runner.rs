//! End-to-end runs: geometry → system → decomposition → preconditioner →
//! GMRES → artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hplmm::analysis::{error_report, summarize_run, ErrorReport, RunRecord, Summary};
use hplmm::coarse::CoarseBasis;
use hplmm::decomposition::{cartesian_decompose, spectral_decompose, watershed_decompose, Decomposition};
use hplmm::export::{self, VtkField};
use hplmm::fem::{assemble, max_shear_stress, FemSystem};
use hplmm::image_io::{generate_synthetic, load_image, save_image, SolidImage, SyntheticKind};
use hplmm::krylov::{gmres, PreconditionerInfo};
use hplmm::mortar::MortarSpace;
use hplmm::smoothers::{LocalSmoother, TwoLevel};
use hplmm::sparse::{CsrMatrix, LinearOperator};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, DecompositionConfig, Geometry, MortarFamily, Preset, RunConfig};

pub const RECORD_FILE: &str = "record.json";
pub const CONFIG_FILE: &str = "config.json";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(hplmm::Error),
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Core(e) => e.fmt(f),
            RunError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<hplmm::Error> for RunError {
    fn from(e: hplmm::Error) -> Self {
        RunError::Core(e)
    }
}

impl RunError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "invalid_config",
            RunError::Core(_) => "solver_error",
            RunError::Io(_) => "io_error",
        }
    }
}

/// Structured failure report written as `diagnostic.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: String,
    pub field: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

impl Diagnostic {
    pub fn from_error(e: &RunError) -> Self {
        Self {
            kind: e.kind().into(),
            field: match e {
                RunError::Config(c) => Some(c.field.clone()),
                RunError::Core(hplmm::Error::InvalidParameter { name, .. }) => Some((*name).into()),
                _ => None,
            },
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

pub fn write_diagnostic(dir: &Path, e: &RunError) {
    let _ = fs::create_dir_all(dir);
    let _ = export::write_json(dir.join(DIAGNOSTIC_FILE), &Diagnostic::from_error(e));
}

/// Provenance sidecar attached to every artifact.
#[derive(Debug, Clone, Serialize)]
struct Meta<'a> {
    artifact: String,
    config: &'a RunConfig,
    version: &'static str,
    threads: Option<String>,
    residual_kind: &'static str,
}

struct Artifacts<'a> {
    dir: PathBuf,
    cfg: &'a RunConfig,
    threads: Option<String>,
}

impl Artifacts<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn meta(&self, path: &Path) -> hplmm::Result<()> {
        export::write_meta(
            path,
            &Meta {
                artifact: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                config: self.cfg,
                version: env!("CARGO_PKG_VERSION"),
                threads: self.threads.clone(),
                residual_kind: "true",
            },
        )
    }

    fn json<T: Serialize>(&self, name: &str, v: &T) -> hplmm::Result<()> {
        let p = self.path(name);
        export::write_json(&p, v)?;
        self.meta(&p)
    }
}

/// Errors of the first-pass (coarse only) and final solutions against the
/// direct solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReports {
    pub first_pass: ErrorReport,
    pub solution: ErrorReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub coarse_dim: usize,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.record.solve.converged {
            0
        } else {
            1
        }
    }
}

pub fn load_geometry(g: &Geometry) -> hplmm::Result<SolidImage> {
    match g {
        Geometry::File(p) => load_image(p),
        Geometry::Synthetic { kind, seed } => generate_synthetic(kind, *seed),
    }
}

pub fn decompose(img: &SolidImage, cfg: &DecompositionConfig) -> hplmm::Result<Decomposition> {
    match cfg {
        DecompositionConfig::Watershed(p) => watershed_decompose(img, p),
        DecompositionConfig::Spectral(p) => spectral_decompose(img, p),
        DecompositionConfig::Cartesian { blocks } => cartesian_decompose(img, *blocks),
    }
}

fn load_label(cfg: &RunConfig) -> String {
    serde_json::to_value(cfg.load)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn smoother_label(cfg: &RunConfig) -> String {
    match cfg.preset {
        Preset::GdswLike => "gdsw_like".into(),
        Preset::Hplmm => cfg.smoother.label(),
    }
}

/// Execute one configuration and write its artifact directory.
pub fn run(cfg: RunConfig) -> Result<RunOutcome, RunError> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let out = Artifacts {
        dir: cfg.output.clone(),
        cfg: &cfg,
        threads: std::env::var("HPLMM_THREADS").ok(),
    };
    fs::create_dir_all(&out.dir).map_err(|e| RunError::Io(format!("{}: {e}", out.dir.display())))?;
    let _ = fs::remove_file(out.path(DIAGNOSTIC_FILE));
    out.json(CONFIG_FILE, &cfg)?;

    let img = load_geometry(&cfg.geometry)?;
    let bcs = cfg.load.boundary_conditions(img.dimensionality);
    let sys = assemble(&img, &cfg.material, &bcs)?;
    let dec = decompose(&img, &cfg.decomposition)?
        .with_contact_grids(cfg.contact_width)
        .inherit_boundary_conditions(&sys);
    dec.validate()?;
    let labels = save_image(&dec.label_image(), out.path("labels"))?;
    out.meta(&labels)?;
    out.meta(&labels.with_extension("json"))?;
    if cfg.export_matrix {
        let p = out.path("A.mtx");
        export::write_matrix_market(&p, &sys.a)?;
        out.meta(&p)?;
        let p = out.path("b.csv");
        export::write_vector_csv(&p, "b", &sys.b)?;
        out.meta(&p)?;
    }

    let t0 = Instant::now();
    let ms = MortarSpace::build(&dec, &sys, &cfg.mortar.to_config())?;
    let basis = CoarseBasis::build(&sys, &dec, &ms)?;
    let mg = basis.with_rhs(&sys.a, &sys.b)?;
    let t_mg = t0.elapsed().as_secs_f64();
    let ml = LocalSmoother::new(&sys, &dec, cfg.smoother.base, cfg.smoother.resolved_stages())?;
    let t_ml = ml.setup_seconds;
    if cfg.export_matrix {
        let p = out.path("P_hat.mtx");
        export::write_matrix_market(&p, &mg.p_hat)?;
        out.meta(&p)?;
        let p = out.path("A_coarse.mtx");
        export::write_matrix_market(&p, &CsrMatrix::from_dense(&mg.coarse))?;
        out.meta(&p)?;
    }

    let first = mg.apply(&sys.b);
    let coarse_dim = mg.coarse_dim();
    let m = TwoLevel::new(&sys.a, &mg, &ml);
    let (x, report) = gmres(&sys.a, &m, &sys.b, None, &cfg.solver)?;
    let report = report.with_build_times(t_mg, t_ml).with_preconditioner(PreconditionerInfo {
        kind: match cfg.preset {
            Preset::Hplmm => "hplmm".into(),
            Preset::GdswLike => "gdsw_like".into(),
        },
        n: Some(cfg.mortar.n),
        beta: match cfg.mortar.kind {
            MortarFamily::Gaussian => Some(cfg.mortar.beta),
            MortarFamily::Algebraic => None,
        },
        smoother: Some(cfg.smoother.label()),
        n_st: Some(cfg.smoother.resolved_stages()),
    });

    let p = out.path("residuals.csv");
    export::write_residuals_csv(&p, &report.residual_history)?;
    out.meta(&p)?;
    out.json("solve_report.json", &report)?;
    let p = out.path("solution.csv");
    export::write_vector_csv(&p, "u", &x)?;
    out.meta(&p)?;

    let errors = if cfg.reference {
        let exact = sys.solve_direct()?;
        let e = ErrorReports {
            first_pass: error_report(&sys, &first, &exact)?,
            solution: error_report(&sys, &x, &exact)?,
        };
        out.json("error_report.json", &e)?;
        Some(e)
    } else {
        None
    };

    write_field(&out, "first_pass.vtk", &sys, &first, errors.as_ref().map(|e| &e.first_pass))?;
    write_field(&out, "solution.vtk", &sys, &x, errors.as_ref().map(|e| &e.solution))?;

    let record = RunRecord {
        domain: cfg.geometry.label(),
        load: load_label(&cfg),
        n: cfg.mortar.n,
        smoother: smoother_label(&cfg),
        solve: report,
        error: errors.map(|e| e.first_pass),
    };
    out.json(RECORD_FILE, &record)?;
    Ok(RunOutcome {
        dir: out.dir.clone(),
        record,
        coarse_dim,
    })
}

fn write_field(out: &Artifacts, name: &str, sys: &FemSystem, u: &[f64], err: Option<&ErrorReport>) -> hplmm::Result<()> {
    let sigma = max_shear_stress(sys, u);
    let mut fields = vec![
        VtkField::NodalVector("displacement", u),
        VtkField::CellScalar("sigma_t", &sigma),
    ];
    if let Some(e) = err {
        fields.push(VtkField::NodalScalar("ep_u", &e.ep_u));
        fields.push(VtkField::CellScalar("ep_sigma", &e.ep_sigma));
    }
    let p = out.path(name);
    export::write_vtk(&p, &sys.mesh, &fields)?;
    out.meta(&p)
}

/// Run and record a diagnostic on failure; returns the process exit code.
pub fn run_and_report(cfg: RunConfig) -> i32 {
    let dir = cfg.output.clone();
    match run(cfg) {
        Ok(o) => {
            if !o.record.solve.converged {
                eprintln!(
                    "not converged after {} iterations (residual {:e})",
                    o.record.solve.iterations, o.record.solve.final_residual
                );
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            write_diagnostic(&dir, &e);
            e.exit_code()
        }
    }
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("summary.csv"), summary.to_csv()).map_err(io)?;
    fs::write(dir.join("summary.txt"), summary.to_table()).map_err(io)?;
    export::write_json(dir.join("summary.json"), summary)?;
    Ok(())
}

/// One run per mortar count in `<output>/n<k>`, plus a combined summary.
pub fn sweep(cfg: RunConfig, ns: &[usize]) -> Result<(Summary, Vec<RunOutcome>), RunError> {
    if ns.is_empty() {
        return Err(ConfigError {
            field: "ns".into(),
            msg: "need at least one mortar count".into(),
        }
        .into());
    }
    let mut outcomes = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut c = cfg.clone();
        c.mortar.n = n;
        c.output = cfg.output.join(format!("n{n}"));
        let dir = c.output.clone();
        match run(c) {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                write_diagnostic(&dir, &e);
                return Err(e);
            }
        }
    }
    let records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let summary = summarize_run(&records);
    write_summary(&cfg.output, &summary)?;
    Ok((summary, outcomes))
}

fn read_run(dir: &Path) -> Result<(RunConfig, RunRecord), RunError> {
    let bad = |msg: String| ConfigError {
        field: dir.display().to_string(),
        msg,
    };
    if !dir.is_dir() {
        return Err(bad("not a directory".into()).into());
    }
    let rec = dir.join(RECORD_FILE);
    let text = fs::read_to_string(&rec).map_err(|_| bad(format!("no {RECORD_FILE}; not a completed run")))?;
    let record: RunRecord = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let text = fs::read_to_string(dir.join(CONFIG_FILE)).map_err(|_| bad(format!("no {CONFIG_FILE}")))?;
    let cfg = RunConfig::from_json(&text)?;
    Ok((cfg, record))
}

/// Side-by-side table of completed runs on one geometry and load.
pub fn compare(dirs: &[PathBuf]) -> Result<Summary, RunError> {
    if dirs.len() < 2 {
        return Err(ConfigError {
            field: "dirs".into(),
            msg: "compare needs at least two run directories".into(),
        }
        .into());
    }
    let runs = dirs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>, _>>()?;
    let (c0, _) = &runs[0];
    for ((c, _), d) in runs.iter().zip(dirs).skip(1) {
        if c.geometry != c0.geometry || c.load != c0.load || c.material != c0.material {
            return Err(ConfigError {
                field: d.display().to_string(),
                msg: format!("geometry/load differ from {}", dirs[0].display()),
            }
            .into());
        }
    }
    let records: Vec<RunRecord> = runs.into_iter().map(|(_, r)| r).collect();
    Ok(summarize_run(&records))
}

/// Write a synthetic image as `<out>.raw` + `<out>.json`.
pub fn gen(kind: &SyntheticKind, seed: u64, out: &Path) -> Result<PathBuf, RunError> {
    let img = generate_synthetic(kind, seed)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    Ok(save_image(&img, out)?)
}
