//! Argument parsing. Flags override the `--config` document.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hplmm::decomposition::{SpectralParams, WatershedParams};
use hplmm::fem::LoadCase;
use hplmm::image_io::{DiskPackParams, GaussianFieldParams, SyntheticKind, TwoGrainParams};
use hplmm::smoothers::BaseSmoother;

use crate::config::{ConfigError, DecompositionConfig, Geometry, MortarFamily, Preset, RunConfig};
use crate::runner::{self, RunError};

#[derive(Debug, Parser)]
#[command(name = "hplmm", version, about = "Multiscale-preconditioned GMRES for voxel elasticity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one configuration
    Run(Overrides),
    /// Run once per mortar count and tabulate
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// mortar counts, comma separated
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        ns: Vec<usize>,
    },
    /// Tabulate completed run directories side by side
    Compare {
        dirs: Vec<PathBuf>,
        /// also write summary files here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic geometry as raw + json
    Gen {
        #[arg(value_enum)]
        kind: SyntheticName,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// generator parameters as a JSON object
        #[arg(long)]
        params: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticName {
    TwoGrain,
    DiskPack,
    GaussianField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LoadName {
    Shear,
    Tension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecompositionName {
    Watershed,
    Spectral,
    Cartesian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MortarName {
    Gaussian,
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmootherName {
    Cg,
    Ilu,
    Dilated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    Hplmm,
    GdswLike,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// image stem (`<stem>.raw` + `<stem>.json`)
    #[arg(long, conflicts_with = "synthetic")]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticName>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub load: Option<LoadName>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, value_enum)]
    pub decomposition: Option<DecompositionName>,
    /// Cartesian block counts, e.g. `4,4,1`
    #[arg(long, value_delimiter = ',')]
    pub blocks: Option<Vec<usize>>,
    /// number of spectral clusters
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub contact_width: Option<usize>,
    #[arg(long, value_enum)]
    pub mortar: Option<MortarName>,
    /// mortar nodes per interface
    #[arg(long, short = 'n')]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mortar_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub smoother: Option<SmootherName>,
    /// ILU fill level
    #[arg(long)]
    pub ilu_level: Option<usize>,
    /// dilation layers for the dilated-grain smoother
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetName>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// skip the direct reference solve
    #[arg(long)]
    pub no_reference: bool,
    /// skip Matrix Market exports
    #[arg(long)]
    pub no_export_matrix: bool,
}

fn synthetic_kind(name: SyntheticName) -> SyntheticKind {
    match name {
        SyntheticName::TwoGrain => SyntheticKind::TwoGrain(TwoGrainParams::default()),
        SyntheticName::DiskPack => SyntheticKind::DiskPack(DiskPackParams::default()),
        SyntheticName::GaussianField => SyntheticKind::GaussianField(GaussianFieldParams::default()),
    }
}

impl Overrides {
    /// Load the config document (or defaults) and apply every given flag.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.output {
            c.output = o.clone();
        }
        if let Some(p) = &self.image {
            c.geometry = Geometry::File(p.clone());
        }
        if let Some(name) = self.synthetic {
            let seed = match &c.geometry {
                Geometry::Synthetic { seed, .. } => *seed,
                Geometry::File(_) => 7,
            };
            c.geometry = Geometry::Synthetic {
                kind: synthetic_kind(name),
                seed,
            };
        }
        if let Some(s) = self.seed {
            match &mut c.geometry {
                Geometry::Synthetic { seed, .. } => *seed = s,
                Geometry::File(_) => {
                    return Err(ConfigError {
                        field: "geometry.seed".into(),
                        msg: "a seed applies to synthetic geometry only".into(),
                    })
                }
            }
        }
        if let Some(l) = self.load {
            c.load = match l {
                LoadName::Shear => LoadCase::Shear,
                LoadName::Tension => LoadCase::Tension,
            };
        }
        if let Some(v) = self.lambda {
            c.material.lambda = v;
        }
        if let Some(v) = self.mu {
            c.material.mu = v;
        }
        if let Some(d) = self.decomposition {
            c.decomposition = match d {
                DecompositionName::Watershed => DecompositionConfig::Watershed(WatershedParams::default()),
                DecompositionName::Spectral => DecompositionConfig::Spectral(SpectralParams::default()),
                DecompositionName::Cartesian => DecompositionConfig::Cartesian { blocks: [2, 2, 1] },
            };
        }
        if let Some(b) = &self.blocks {
            let DecompositionConfig::Cartesian { blocks } = &mut c.decomposition else {
                return Err(ConfigError {
                    field: "decomposition.blocks".into(),
                    msg: "blocks apply to the cartesian decomposition only".into(),
                });
            };
            if b.is_empty() || b.len() > 3 {
                return Err(ConfigError {
                    field: "decomposition.blocks".into(),
                    msg: "give one to three block counts".into(),
                });
            }
            *blocks = [1, 1, 1];
            blocks[..b.len()].copy_from_slice(b);
        }
        if let Some(k) = self.clusters {
            let DecompositionConfig::Spectral(p) = &mut c.decomposition else {
                return Err(ConfigError {
                    field: "decomposition.k".into(),
                    msg: "clusters apply to the spectral decomposition only".into(),
                });
            };
            p.k = k;
        }
        if let Some(w) = self.contact_width {
            c.contact_width = w;
        }
        if let Some(m) = self.mortar {
            c.mortar.kind = match m {
                MortarName::Gaussian => MortarFamily::Gaussian,
                MortarName::Algebraic => MortarFamily::Algebraic,
            };
        }
        if let Some(n) = self.n {
            c.mortar.n = n;
        }
        if let Some(b) = self.beta {
            c.mortar.beta = b;
        }
        if let Some(s) = self.mortar_seed {
            c.mortar.seed = s;
        }
        if let Some(s) = self.smoother {
            c.smoother.base = match s {
                SmootherName::Cg => BaseSmoother::ContactGrain,
                SmootherName::Ilu => BaseSmoother::Ilu { k: 0 },
                SmootherName::Dilated => BaseSmoother::DilatedGrains { overlap: 8 },
            };
            if self.stages.is_none() {
                c.smoother.stages = None;
            }
        }
        if let Some(k) = self.ilu_level {
            let BaseSmoother::Ilu { k: level } = &mut c.smoother.base else {
                return Err(ConfigError {
                    field: "smoother.base.k".into(),
                    msg: "ILU level applies to the ilu smoother only".into(),
                });
            };
            *level = k;
        }
        if let Some(o) = self.overlap {
            let BaseSmoother::DilatedGrains { overlap } = &mut c.smoother.base else {
                return Err(ConfigError {
                    field: "smoother.base.overlap".into(),
                    msg: "overlap applies to the dilated smoother only".into(),
                });
            };
            *overlap = o;
        }
        if let Some(s) = self.stages {
            c.smoother.stages = Some(s);
        }
        if let Some(p) = self.preset {
            c.preset = match p {
                PresetName::Hplmm => Preset::Hplmm,
                PresetName::GdswLike => Preset::GdswLike,
            };
        }
        if let Some(t) = self.tol {
            c.solver.tol = t;
        }
        if let Some(m) = self.max_iter {
            c.solver.max_iter = m;
        }
        if self.no_reference {
            c.reference = false;
        }
        if self.no_export_matrix {
            c.export_matrix = false;
        }
        Ok(c)
    }

    fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| RunConfig::default().output)
    }
}

fn report(e: &RunError, dir: Option<&std::path::Path>) -> i32 {
    eprintln!("error: {e}");
    if let Some(d) = dir {
        runner::write_diagnostic(d, e);
    }
    e.exit_code()
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(o) => match o.resolve() {
            Ok(cfg) => runner::run_and_report(cfg),
            Err(e) => report(&e.into(), Some(&o.output_dir())),
        },
        Command::Sweep { overrides, ns } => {
            let cfg = match overrides.resolve() {
                Ok(c) => c,
                Err(e) => return report(&e.into(), Some(&overrides.output_dir())),
            };
            let dir = cfg.output.clone();
            match runner::sweep(cfg, &ns) {
                Ok((summary, outcomes)) => {
                    print!("{}", summary.to_table());
                    if outcomes.iter().all(|o| o.record.solve.converged) {
                        0
                    } else {
                        1
                    }
                }
                Err(e) => report(&e, Some(&dir)),
            }
        }
        Command::Compare { dirs, out } => match runner::compare(&dirs) {
            Ok(summary) => {
                print!("{}", summary.to_table());
                match out {
                    Some(d) => match runner::write_summary(&d, &summary) {
                        Ok(()) => 0,
                        Err(e) => report(&e, None),
                    },
                    None => 0,
                }
            }
            Err(e) => report(&e, None),
        },
        Command::Gen { kind, seed, params, out } => {
            let k = match params {
                None => synthetic_kind(kind),
                Some(text) => match parse_params(kind, &text) {
                    Ok(k) => k,
                    Err(e) => return report(&e.into(), None),
                },
            };
            match runner::gen(&k, seed, &out) {
                Ok(p) => {
                    println!("{}", p.display());
                    0
                }
                Err(e) => report(&e, None),
            }
        }
    }
}

fn parse_params(kind: SyntheticName, text: &str) -> Result<SyntheticKind, ConfigError> {
    let err = |e: serde_json::Error| ConfigError {
        field: "params".into(),
        msg: e.to_string(),
    };
    Ok(match kind {
        SyntheticName::TwoGrain => SyntheticKind::TwoGrain(serde_json::from_str(text).map_err(err)?),
        SyntheticName::DiskPack => SyntheticKind::DiskPack(serde_json::from_str(text).map_err(err)?),
        SyntheticName::GaussianField => SyntheticKind::GaussianField(serde_json::from_str(text).map_err(err)?),
    })
}
