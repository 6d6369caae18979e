use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not symmetric (max |M - M^T| = {max_deviation:e})")]
    Asymmetric { max_deviation: f64 },
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("invalid sampling probability {value} at node {index}")]
    InvalidSamplingProb { index: usize, value: f64 },
    #[error("sampling probabilities sum to {sum}, expected 1")]
    ProbabilitiesNotNormalized { sum: f64 },
    #[error("coupled probability N_l * p = {value} exceeds 1 at node {index}")]
    CouplingExceedsOne { index: usize, value: f64 },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("invalid covariance for erf moments at ({row}, {col}): determinant term {value:e}")]
    InvalidErfCovariance { row: usize, col: usize, value: f64 },
    #[error("invalid train split: {0}")]
    InvalidSplit(String),
    #[error("invalid network program: {0}")]
    InvalidProgram(String),
    #[error("block requires a graph but none was supplied")]
    MissingGraph,
    #[error("linear solve failed: {0}")]
    SingularSystem(&'static str),
}
