use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: body has n = {expected}, point has {got} coordinates")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("pencil base must be normalized to r = 1 (got r = {0})")]
    BaseNotNormalized(f64),
    #[error("affine map is singular")]
    SingularMap,
    #[error("affine map condition number {cond:.3e} exceeds cap {cap:.1e}")]
    IllConditioned { cond: f64, cap: f64 },
    #[error("body spec: {0}")]
    Spec(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("walk start point is not inside the body")]
    StartOutside,
    #[error("empty chord range [{0}, {1}]")]
    EmptyRange(f64, f64),
    #[error("invalid walk config: {0}")]
    InvalidConfig(String),
    #[error("rejection sampler exceeded {0} tries")]
    RejectionCap(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnealingError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("covariance is rank deficient (smallest eigenvalue {0:.3e})")]
    RankDeficient(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("state {0} has zero estimated outflow; increase samples_per_state")]
    ZeroOutflow(usize),
    #[error("chain is not reversible (detailed-balance residual {0:.3e})")]
    NotReversible(f64),
    #[error("state count {count} exceeds cap {cap}")]
    TooManyStates { count: usize, cap: usize },
    #[error("stationary distribution did not converge")]
    NoConvergence,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("simulated dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("quantum Chebyshev search exhausted all truncation levels without a nonzero estimate")]
    SearchExhausted,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Annealing(#[from] AnnealingError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("invalid input: {0}")]
    Input(String),
}
