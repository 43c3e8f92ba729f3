use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LatticeError {
    #[error("unsupported basis: {0}")]
    UnsupportedBasis(String),
    #[error("cutoff must be a finite real >= 1, got {0}")]
    InvalidCutoff(f64),
    #[error("regularity index must be finite and >= 0, got {0}")]
    InvalidRegularity(f64),
    #[error("weighted norm overflows at s = {s} (dominant index {index})")]
    NormOverflow { index: String, s: f64 },
    #[error("block at {index} has length {got}, expected {expected}")]
    BlockShape {
        index: String,
        expected: usize,
        got: usize,
    },
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransformError {
    #[error("grid of size {grid} aliases frequency {frequency} (need at least {needed} points)")]
    Aliasing {
        grid: usize,
        frequency: u32,
        needed: usize,
    },
    #[error("quadrature resolution insufficient: {0}")]
    Resolution(String),
    #[error("field is not real-declared")]
    NotReal,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NonlinearityError {
    #[error("unsupported nonlinearity: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Which of the two cluster properties failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterProperty {
    Dyadic,
    Separation,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("cluster {property:?} property violated: {detail}")]
pub struct ClusterError {
    pub property: ClusterProperty,
    /// Human-readable witnesses (offending clusters and the measured values).
    pub detail: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("Neumann series diverged after {terms} terms (contraction estimate {contraction:.3e})")]
    NeumannDiverged { terms: usize, contraction: f64 },
    #[error("cluster block {cluster} is numerically singular (condition estimate {condition:.3e}); the parameter must be excluded")]
    SingularCluster { cluster: usize, condition: f64 },
    #[error("matrix is numerically singular (condition estimate {condition:.3e}); the parameter must be excluded")]
    Singular { condition: f64 },
    #[error("dense solve of dimension {dim} exceeds the configured cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("Schur complement self-adjointness defect {defect:.3e} exceeds 1e-10")]
    NotSelfAdjoint { defect: f64 },
    #[error("residual check failed: {residual:.3e} > {bound:.3e}")]
    Residual { residual: f64, bound: f64 },
    #[error("invalid site partition: {0}")]
    InvalidPartition(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NashMoserError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("linear solve failed at step {step}: {source}")]
    Linear {
        step: usize,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

impl From<TransformError> for SolverError {
    fn from(e: TransformError) -> Self {
        SolverError::Nonlinearity(e.into())
    }
}

impl From<LatticeError> for SolverError {
    fn from(e: LatticeError) -> Self {
        SolverError::Nonlinearity(e.into())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScanError {
    #[error("invalid scan configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}
