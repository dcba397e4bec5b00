use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state index {index} out of range for {n} states")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid probability measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("generator is not irreducible")]
    NotIrreducible,

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("eigensolver failed: {0}")]
    EigFailure(String),

    #[error("cycle must visit at least 3 distinct states, got {0}")]
    CycleTooShort(usize),

    #[error("state {0} is absorbing")]
    AbsorbingState(usize),

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("path is empty")]
    EmptyPath,

    #[error("optimization failed: {0}")]
    OptFailure(String),

    #[error("level {ell} outside the open range ({min}, {max})")]
    OutOfRange { ell: f64, min: f64, max: f64 },

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("time step too large: dt * max|drift| = {excursion} exceeds {limit}")]
    UnstableStep { excursion: f64, limit: f64 },

    #[error("matrix is not antisymmetric")]
    NotAntisymmetric,

    #[error("mobility does not dominate the identity at node {node}: min eigenvalue of Sigma - I is {min_eig}")]
    NotDominating { node: usize, min_eig: f64 },

    #[error("perturbed rates are negative (min off-diagonal {0})")]
    NotAdmissible(f64),

    #[error("field validation failed: {0}")]
    FieldValidation(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
