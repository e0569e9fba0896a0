//! Run configuration: a single JSON document, every default materialized.

use std::path::{Path, PathBuf};

use hplmm::decomposition::{SpectralParams, WatershedParams};
use hplmm::fem::{LoadCase, MaterialParams};
use hplmm::image_io::{SyntheticKind, TwoGrainParams};
use hplmm::krylov::GmresConfig;
use hplmm::mortar::{MortarConfig, MortarKind};
use hplmm::smoothers::BaseSmoother;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// raw + json sidecar image
    File(PathBuf),
    Synthetic {
        #[serde(flatten)]
        kind: SyntheticKind,
        #[serde(default = "default_geometry_seed")]
        seed: u64,
    },
}

fn default_geometry_seed() -> u64 {
    7
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::Synthetic {
            kind: SyntheticKind::TwoGrain(TwoGrainParams::default()),
            seed: default_geometry_seed(),
        }
    }
}

impl Geometry {
    /// Short label used in summary tables.
    pub fn label(&self) -> String {
        match self {
            Geometry::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into()),
            Geometry::Synthetic { kind, .. } => match kind {
                SyntheticKind::TwoGrain(_) => "two_grain".into(),
                SyntheticKind::DiskPack(_) => "disk_pack".into(),
                SyntheticKind::GaussianField(_) => "gaussian_field".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DecompositionConfig {
    Watershed(WatershedParams),
    Spectral(SpectralParams),
    Cartesian { blocks: [usize; 3] },
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig::Watershed(WatershedParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MortarFamily {
    Gaussian,
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MortarSection {
    pub kind: MortarFamily,
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for MortarSection {
    fn default() -> Self {
        Self {
            kind: MortarFamily::Gaussian,
            n: 2,
            beta: 4.0,
            seed: 0,
        }
    }
}

impl MortarSection {
    pub fn to_config(&self) -> MortarConfig {
        MortarConfig {
            kind: match self.kind {
                MortarFamily::Gaussian => MortarKind::Gaussian { beta: self.beta },
                MortarFamily::Algebraic => MortarKind::Algebraic,
            },
            n: self.n,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherSection {
    pub base: BaseSmoother,
    /// `None` picks the base smoother's default stage count
    pub stages: Option<usize>,
}

impl Default for SmootherSection {
    fn default() -> Self {
        Self {
            base: BaseSmoother::ContactGrain,
            stages: None,
        }
    }
}

impl SmootherSection {
    pub fn resolved_stages(&self) -> usize {
        self.stages.unwrap_or_else(|| self.base.default_stages())
    }

    pub fn label(&self) -> String {
        match self.base {
            BaseSmoother::ContactGrain => "cg".into(),
            BaseSmoother::Ilu { k } => format!("ilu{k}"),
            BaseSmoother::DilatedGrains { overlap } => format!("dilated{overlap}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// coarse preconditioner with the configured smoother
    #[default]
    Hplmm,
    /// Cartesian blocks, one mortar node per interface, dilated-grain smoother
    GdswLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub material: MaterialParams,
    pub load: LoadCase,
    pub decomposition: DecompositionConfig,
    pub contact_width: usize,
    pub mortar: MortarSection,
    pub smoother: SmootherSection,
    pub preset: Preset,
    pub solver: GmresConfig,
    /// compare first-pass and final solutions with a sparse direct solve
    pub reference: bool,
    pub export_matrix: bool,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            material: MaterialParams::default(),
            load: LoadCase::Shear,
            decomposition: DecompositionConfig::default(),
            contact_width: 16,
            mortar: MortarSection::default(),
            smoother: SmootherSection::default(),
            preset: Preset::Hplmm,
            solver: GmresConfig::default(),
            reference: true,
            export_matrix: true,
            output: PathBuf::from("hplmm-out"),
        }
    }
}

/// A configuration problem, named by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.msg)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            // serde reports the offending key in its message
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            bad(&field, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Apply the preset, turning it into explicit settings.
    pub fn resolved(mut self) -> Self {
        if self.preset == Preset::GdswLike {
            if !matches!(self.decomposition, DecompositionConfig::Cartesian { .. }) {
                self.decomposition = DecompositionConfig::Cartesian { blocks: [4, 4, 2] };
            }
            self.mortar.n = 1;
            if !matches!(self.smoother.base, BaseSmoother::DilatedGrains { .. }) {
                self.smoother.base = BaseSmoother::DilatedGrains { overlap: 8 };
            }
        }
        if self.smoother.stages.is_none() {
            self.smoother.stages = Some(self.smoother.base.default_stages());
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Geometry::File(p) = &self.geometry {
            let raw = p.with_extension("raw");
            let json = p.with_extension("json");
            if !(p.exists() || raw.exists() || json.exists()) {
                return Err(bad("geometry.file", format!("{} does not exist", p.display())));
            }
        }
        if !(self.material.lambda.is_finite() && self.material.mu.is_finite() && self.material.mu > 0.0) {
            return Err(bad("material", "λ and μ must be finite with μ > 0"));
        }
        if self.mortar.n == 0 {
            return Err(bad("mortar.n", "need at least one mortar node per interface"));
        }
        if !(self.mortar.beta > 0.0 && self.mortar.beta.is_finite()) {
            return Err(bad("mortar.beta", "must be positive"));
        }
        if !(self.solver.tol > 0.0) {
            return Err(bad("solver.tol", "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be at least 1"));
        }
        if self.smoother.stages == Some(0) {
            return Err(bad("smoother.stages", "must be at least 1"));
        }
        match &self.decomposition {
            DecompositionConfig::Watershed(p) if p.n_seeds == Some(0) => {
                return Err(bad("decomposition.n_seeds", "must be at least 1"))
            }
            DecompositionConfig::Spectral(p) if p.k == 0 => return Err(bad("decomposition.k", "must be at least 1")),
            DecompositionConfig::Cartesian { blocks } if blocks.iter().any(|&b| b == 0) => {
                return Err(bad("decomposition.blocks", "block counts must be positive"))
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig {
            load: LoadCase::Tension,
            decomposition: DecompositionConfig::Cartesian { blocks: [2, 3, 1] },
            ..Default::default()
        }
        .resolved();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn zero_mortar_count_names_the_field() {
        let c = RunConfig::from_json(r#"{"mortar": {"n": 0}}"#).unwrap();
        assert_eq!(c.validate().unwrap_err().field, "mortar.n");
    }

    #[test]
    fn unknown_field_is_named() {
        let e = RunConfig::from_json(r#"{"smoother": {"base": {"kind": "jacobi"}}}"#).unwrap_err();
        assert!(e.msg.contains("jacobi"), "{e}");
    }

    #[test]
    fn misspelled_key_is_named() {
        let e = RunConfig::from_json(r#"{"solver": {"tol": 1e-9}, "mortr": {}}"#).unwrap_err();
        assert_eq!(e.field, "mortr");
    }

    #[test]
    fn gdsw_preset_resolves() {
        let c = RunConfig {
            preset: Preset::GdswLike,
            ..Default::default()
        }
        .resolved();
        assert_eq!(c.mortar.n, 1);
        assert!(matches!(c.decomposition, DecompositionConfig::Cartesian { .. }));
        assert!(matches!(c.smoother.base, BaseSmoother::DilatedGrains { .. }));
    }
}
