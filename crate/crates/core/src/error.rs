use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("requested dimension {rows}x{cols} is too large")]
    DimensionTooLarge { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coefficient blocks ({i},{j}) and ({j},{i}) are not transposes of each other (deviation {deviation:e})")]
    AsymmetricCoefficients { i: usize, j: usize, deviation: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("polynomial is not globally positive semidefinite (smallest coefficient eigenvalue {min_eigenvalue:e})")]
    NotGloballyPsd { min_eigenvalue: f64 },

    #[error("map does not preserve symmetry: phi(B_ij) and phi(B_ji)^T differ by {deviation:e}")]
    SymmetryBroken { deviation: f64 },

    #[error("Slater condition violated: smallest eigenvalue at the supplied point is {min_eigenvalue:e}")]
    SlaterViolated { min_eigenvalue: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("rank-one split failed: {0}")]
    SplitFailed(String),

    #[error("witness construction failed: {0}")]
    WitnessConstructionFailed(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("invalid repeat count {0}; must be at least 1")]
    InvalidRepeat(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
