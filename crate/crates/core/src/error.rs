use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("no lattice square fits inside the scaled shape")]
    EmptyDomain,
    #[error("marked boundary edges coincide")]
    DegenerateMarks,
    #[error("invalid domain triple: {0}")]
    InvalidDomain(String),
    #[error("path exhausts the domain at step {0}")]
    PathExhaustsDomain(usize),
    #[error("linear solver failed to converge (residual {residual:.3e} after {iterations} iterations)")]
    SolverFailure { residual: f64, iterations: usize },
    #[error("target edge is unreachable from the start edge")]
    UnreachableTarget,
    #[error("path is not a walk in the domain: {0}")]
    PathNotInDomain(String),
    #[error("domain has {0} sites, too large for exhaustive enumeration")]
    TooLargeForOracle(usize),
    #[error("conformal map construction failed: max boundary defect {0:.3e}")]
    MapConvergenceFailure(f64),
    #[error("point is within {0:.3} of the boundary")]
    BoundaryEvaluation(f64),
    #[error("inverse map evaluated outside its reliable range")]
    InverseOutOfRange,
    #[error("capacity expansion did not converge: estimates {0:.6e} and {1:.6e}")]
    NonConvergentExpansion(f64, f64),
    #[error("tip image could not be bracketed at curve point {0}")]
    TipEscapedResolution(usize),
    #[error("hypothesis violated at step {step}: {reason}")]
    HypothesisViolation { step: usize, reason: String },
    #[error("no plateau across the epsilon grid")]
    NoPlateau,
    #[error("degenerate content profile")]
    DegenerateProfile,
    #[error("time {0} outside curve range")]
    OutOfRange(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
