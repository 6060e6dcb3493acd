use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grazing direction: |<v,eta>| = {0:e}")]
    Grazing(f64),

    #[error("trajectory hits the skeleton on face {face} (distance {distance:e})")]
    HitSkeleton { face: usize, distance: f64 },

    #[error("no face ahead of the trajectory")]
    Escaped,

    #[error("polyhedron is unbounded")]
    Unbounded,

    #[error("polyhedron has empty interior")]
    EmptyInterior,

    #[error("degenerate input: face {face} is redundant or repeated")]
    RedundantFace { face: usize },

    #[error("degenerate vertex {vertex}: incident normals are dependent")]
    DegenerateVertex { vertex: usize },

    #[error("degenerate cone: normals are linearly dependent")]
    DegenerateCone,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
