use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(usize),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("singular matrix at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("no convergence after {iterations} iterations (best residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("solvability violated: <f, m> = {defect:.3e}")]
    Solvability { defect: f64 },
    #[error("degenerate mode: normalization integral {0:.3e}")]
    Degenerate(f64),
    #[error("eigenvalue crossing near k = {k}")]
    Crossing { k: f64 },
    #[error("field leaves the admissible set (|d| = {d_norm:.3e})")]
    ExitsOmega { d_norm: f64 },
    #[error("time step {dt:.3e} exceeds stability bound {bound:.3e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("non-finite value encountered in {0}")]
    NotFinite(String),
    #[error("envelope too close to the periodic seam: {0}")]
    Seam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
