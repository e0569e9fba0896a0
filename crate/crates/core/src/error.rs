use thiserror::Error;

/// Errors raised anywhere in the build/solve pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sidecar {path}: {msg}")]
    Sidecar { path: String, msg: String },
    #[error("size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),
    #[error("image contains no solid voxels")]
    AllVoid,
    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },
    #[error("floating solid component {component} ({elements} elements) has no Dirichlet attachment")]
    FloatingComponent { component: usize, elements: usize },
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("zero pivot in incomplete factorization at row {row}")]
    ZeroPivot { row: usize },
    #[error("singular grain block for grain {grain}: {msg}")]
    SingularGrain { grain: usize, msg: String },
    #[error("singular subdomain block for subdomain {subdomain}: {msg}")]
    SingularSubdomain { subdomain: usize, msg: String },
    #[error("singular interface block on interface {interface}")]
    SingularInterface { interface: usize },
    #[error("rank-deficient mortar block on interface {interface}")]
    RankDeficientInterface { interface: usize },
    #[error("coarse factorization failed: {0}")]
    CoarseFactorization(String),
    #[error("interface {0} has no fine nodes")]
    EmptyInterface(usize),
    #[error("coincident mortar nodes on interface {0}")]
    CoincidentMortarNodes(usize),
    #[error("dof {0} is assigned to neither a grain interior nor an interface")]
    UnassignedDof(usize),
    #[error("gray-scale image rejected: {0}")]
    GrayScale(&'static str),
    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            msg: msg.into(),
        }
    }
}
