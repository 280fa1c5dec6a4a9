use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular diffusion matrix at node {node}: |det a| = {det:e}")]
    Singular { node: usize, det: f64 },

    #[error("terminal matrix A is singular: smallest eigenvalue {0:e}")]
    SingularTerminal(f64),

    #[error("quadrature produced a non-finite value at (t, s) = ({t}, {s})")]
    Quadrature { t: f64, s: f64 },

    #[error("grid with {steps} steps is not divisible by m = {m}")]
    Divisibility { steps: usize, m: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
