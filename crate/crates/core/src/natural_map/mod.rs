//! Natural maps `x ↦ bar(b_x^s)`, their differentials, Jacobians and volumes.

mod differential;
mod elementary;
mod map;
mod representation;
mod volume;

pub use differential::{
    differential, implicit_residual, jac_p, jacobian_bound, lipschitz_estimate, properly_ends_diagnostic, EndsReport,
};
pub use elementary::{classify, nonelementary_check, ElementaryVerdict, IsometryType};
pub use map::{epsilon_sweep, natural_map_eval, target_measure, EpsilonSweep, NaturalMap, NaturalMapEval, Truncation};
pub use representation::{Representation, SigmaTarget};
pub use volume::{dirichlet_sample, hyperbolic_ball_volume, volume_estimate, DomainSample};

use thiserror::Error;

use crate::barycenter::BarycenterError;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("representation incomplete: missing image for {0}")]
    RepresentationIncomplete(String),
    #[error("invalid representation: {0}")]
    InvalidRepresentation(String),
    #[error("representation image looks elementary: {0}")]
    ElementaryImage(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("map evaluation failed: {0}")]
    EvaluationFailed(String),
    #[error(transparent)]
    Barycenter(#[from] BarycenterError),
}
