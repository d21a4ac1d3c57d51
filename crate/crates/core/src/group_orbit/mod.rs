//! Group balls `{γ : d(O, γO) <= R}`, orbit counting and critical exponents.

mod ball;
mod exponent;
pub mod presets;
mod spec;

pub use ball::{enumerate_ball, BallOptions, GroupBall};
pub use exponent::{
    counting_function, default_window, estimate_exponent, poincare_partial, write_counting_csv, ExponentEstimate,
};
pub use spec::{inverse_label, Generator, GroupSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("group has no generators")]
    NoGenerators,
    #[error("generator {label}: {reason}")]
    InvalidGenerator { label: String, reason: String },
    #[error("unknown generator label {0:?}")]
    UnknownLabel(String),
    #[error("enumeration stopped at the cap of {cap} elements; partial ball returned")]
    CapExceeded { cap: usize, partial: Box<GroupBall> },
    #[error("radius {r} exceeds the ball radius {r_max}")]
    RExceedsBall { r: f64, r_max: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
