use thiserror::Error;

use vendi_core::Error as CoreError;

/// Command failures, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Failure(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("indefinite kernel: {0}")]
    Indefinite(String),
    #[error("invalid arguments: {0}")]
    BadArgs(String),
    #[error("simulation diverged: {0}")]
    Diverged(String),
    #[error("constant column '{0}' has zero variance")]
    ConstantColumn(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Malformed(_) => 2,
            CliError::Indefinite(_) => 3,
            CliError::BadArgs(_) => 4,
            CliError::Diverged(_) => 5,
            CliError::ConstantColumn(_) => 6,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::IndefiniteKernel { .. } => CliError::Indefinite(msg),
            CoreError::Diverged { .. } => CliError::Diverged(msg),
            CoreError::DimensionMismatch { .. }
            | CoreError::UnknownCategory { .. }
            | CoreError::NotUnitNorm { .. }
            | CoreError::ZeroVector
            | CoreError::NonFinite
            | CoreError::EmptyCollection
            | CoreError::NotSquare { .. }
            | CoreError::NotSymmetric { .. }
            | CoreError::NonUnitDiagonal { .. }
            | CoreError::InvalidWeights
            | CoreError::NotNormalized { .. } => CliError::Malformed(msg),
            CoreError::IncompatibleItem { .. }
            | CoreError::NotDifferentiable(_)
            | CoreError::InvalidParameter(_)
            | CoreError::RankDeficient { .. }
            | CoreError::NotOrthonormal { .. }
            | CoreError::BiasedWindow { .. }
            | CoreError::EmptyRegion { .. } => CliError::BadArgs(msg),
            CoreError::QuadratureNotConverged { .. } => CliError::Failure(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}
