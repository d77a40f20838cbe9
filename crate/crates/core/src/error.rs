use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty alphabet: {0}")]
    EmptyAlphabet(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("negative probability {value} at row {row}, column {col}")]
    NegativeProbability { row: usize, col: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1")]
    RowSum { sum: f64 },

    #[error("negative distortion {value} at row {row}, column {col}")]
    NegativeDistortion { row: usize, col: usize, value: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("distortion {distortion} is below the feasibility floor {floor}")]
    InfeasibleDistortion { distortion: f64, floor: f64 },

    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("reducible chain: states {0:?} are not mutually reachable")]
    Reducible(Vec<usize>),

    #[error("periodic chain (period {0})")]
    Periodic(usize),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("lattice support exceeded {0} atoms")]
    LatticeOverflow(usize),

    #[error("quadrature did not converge (estimated error {0:e})")]
    Quadrature(f64),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
