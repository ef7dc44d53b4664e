use crate::coeff::{EvalError, ParseError};
use crate::linalg::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point ({}, {}) lies outside the mesh", .0[0], .0[1])]
    OutOfDomain([f64; 2]),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero diagonal entry in row {0}; Jacobi preconditioner undefined")]
    ZeroDiagonal(usize),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(
        "ellipticity violated at ({}, {}): min eigenvalue {min_eig} < lambda {lambda}",
        .point[0], .point[1]
    )]
    Ellipticity {
        point: [f64; 2],
        min_eig: f64,
        lambda: f64,
    },

    #[error("non-divergence form requires div A expressions")]
    MissingDivA,

    #[error(
        "linear solver did not converge: {} iterations, relative residual {:e}",
        .0.iterations, .0.final_residual
    )]
    NotConverged(SolveReport),

    #[error("weight is not positive: value {value} at ({}, {})", .point[0], .point[1])]
    Positivity { value: f64, point: [f64; 2] },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
