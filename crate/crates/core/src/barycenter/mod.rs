//! Barycenters of finite measures on `H^n ∪ ∂H^n`.
//!
//! Boundary atoms contribute their Busemann function; interior atoms are
//! smeared by their visual measure, which reduces to a radial kernel
//! tabulated once per dimension in [`VisualKernelProfile`].

mod profile;
mod solver;

pub use profile::{KernelValue, VisualKernelProfile, DEFAULT_RADIUS, DEFAULT_STEP};
pub use solver::{
    busemann_average, busemann_average_grad, busemann_average_hessian, gradient_floor, initial_point, is_two_equal_deltas,
    solve_barycenter, BarycenterReport, Method, SolverOptions, PRECISION_RADIUS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BarycenterError {
    #[error("measure has no positive mass")]
    ZeroMass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("two boundary atoms of equal weight have no barycenter")]
    DegenerateTwoDeltas,
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    MaxIterExceeded { iterations: usize, grad_norm: f64 },
    #[error("line search failed after {iterations} iterations (gradient norm {grad_norm:e})")]
    Stalled { iterations: usize, grad_norm: f64 },
    #[error("invalid kernel profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
