use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0} (only 2 and 3 are implemented)")]
    UnsupportedDimension(usize),

    #[error("point lies outside the closed vertex set")]
    OutsideDomain,

    #[error("point is not on the boundary of the vertex set (distance {0:.3e})")]
    NotOnBoundary(f64),

    #[error("finite-difference stencil leaves the data domain at {0:?}")]
    StencilOutsideDomain([f64; 3]),

    #[error("support of the field meets the detector half-space x_n <= 0")]
    NotPlanarValid,

    #[error("grid is not closed under the antipodal map")]
    NotAntipodal,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("least-squares fit is rank deficient: {0}")]
    RankDeficient(String),

    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch { expected: String, found: String },

    #[error("evaluation point outside the declared validity range: {0}")]
    OutsideValidity(String),

    #[error("container schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
