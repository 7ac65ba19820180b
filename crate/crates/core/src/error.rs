use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown {attribute} category '{value}'")]
    UnknownCategory { attribute: &'static str, value: String },

    #[error("kernel '{kernel}' cannot be applied to {item}")]
    IncompatibleItem { kernel: &'static str, item: &'static str },

    #[error("kernel '{0}' has no position gradient")]
    NotDifferentiable(&'static str),

    #[error("linear kernel requires unit-norm vectors, got norm {norm}")]
    NotUnitNorm { norm: f64 },

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("collection is empty")]
    EmptyCollection,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: |K[{row},{col}] - K[{col},{row}]| = {deviation:e}")]
    NotSymmetric { row: usize, col: usize, deviation: f64 },

    #[error("kernel diagonal entry {index} is {value}, expected 1")]
    NonUnitDiagonal { index: usize, value: f64 },

    #[error("indefinite kernel: eigenvalue {eigenvalue:e} is below -{tolerance:e} * lambda_max")]
    IndefiniteKernel { eigenvalue: f64, tolerance: f64 },

    #[error("projection basis is not orthonormal (max |V^T V - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("requested {requested} basis vectors but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("weights must be non-negative with positive total")]
    InvalidWeights,

    #[error("abundance vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("sampler diverged at step {step} (replica {replica})")]
    Diverged { step: u64, replica: usize },

    #[error("free-energy estimate undefined: no samples in the {region} region")]
    EmptyRegion { region: &'static str },

    #[error("analysis window contains biased samples (nu = {nu} at step {step})")]
    BiasedWindow { step: u64, nu: f64 },

    #[error("quadrature did not converge (last change {change:e})")]
    QuadratureNotConverged { change: f64 },
}
