use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polygon boundary intersects itself (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("degenerate corner at vertex {0}: opening is 0 or 2π")]
    DegenerateCorner(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
    #[error("mesh file: {0}")]
    MeshFormat(String),

    #[error("Newton iteration did not converge for alpha = {alpha}")]
    NotConverged { alpha: f64 },
    #[error("argument-principle certification failed for alpha = {alpha}: {reason}")]
    CertificationFailed { alpha: f64, reason: String },
    #[error("root on rectangle boundary (min |f| = {min_abs:e})")]
    BoundaryRoot { min_abs: f64 },

    #[error("corner quadrature under-resolved after depth {depth}")]
    QuadratureUnderResolved { depth: usize },
    #[error("linear solver failure: {0}")]
    SolverFailure(String),
    #[error("incompatible data: {0}")]
    IncompatibleData(String),
    #[error("all cut-off profiles give the same nonzero integral {0:e}")]
    CutoffDegenerate(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("Laplace transform under-resolved (estimate {estimate:e})")]
    TransformUnderResolved { estimate: f64 },
    #[error("contour under-resolved: doubling the node count changed the output by {change:e}")]
    ContourUnderResolved { change: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
