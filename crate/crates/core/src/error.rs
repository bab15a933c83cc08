use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("reversed integration interval [{a}, {b}]")]
    ReversedInterval { a: f64, b: f64 },

    #[error("piecewise polynomial degree {0} exceeds the maximum of {max}", max = crate::basis::MAX_DEGREE)]
    DegreeTooLarge(u8),

    #[error("sample size {0} admits no model")]
    EmptyCollection(usize),

    #[error("cannot rescale: observed times are all zero")]
    DegenerateTimes,

    #[error("linear solve failed for model ({d1}, {d2}) although the eigenvalue guard passed")]
    SolverBreakdown { d1: usize, d2: usize },

    #[error("intensity {value} exceeds the thinning bound {bound} at (x = {x}, t = {t})")]
    IntensityAboveBound { value: f64, bound: f64, x: f64, t: f64 },

    #[error("rate fit needs at least 3 distinct sample sizes, got {0}")]
    TooFewSizes(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
