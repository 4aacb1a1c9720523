use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PieError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported dimension {0}: at most 3 axes are supported")]
    UnsupportedDimension(usize),
    #[error("point {point:?} lies outside the domain [{lower}, {upper}]^{dim}")]
    Domain {
        point: Vec<f64>,
        lower: f64,
        upper: f64,
        dim: usize,
    },
    #[error("grid-aligned data can only be evaluated at grid nodes (point {0:?})")]
    InterpolationUnsupported(Vec<f64>),
    #[error("non-finite kernel value at x={x:?}, s={s:?}, y={y:?}")]
    Evaluation {
        x: Vec<f64>,
        s: Vec<f64>,
        y: Vec<f64>,
    },
    #[error("fiber {fiber:?} at alpha={alpha:?} is numerically singular (|det| = {det_abs:e})")]
    SingularFiber {
        fiber: Option<usize>,
        alpha: Vec<f64>,
        det_abs: f64,
    },
    #[error("tensor-quadrature coefficients support order <= 3, got {0}")]
    UnsupportedOrder(usize),
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),
}

pub type Result<T> = std::result::Result<T, PieError>;
