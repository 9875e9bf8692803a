use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// A Gaussian primitive violates its invariants (non-positive scale,
    /// opacity outside (0,1), non-unit quaternion).
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),

    /// Covariance matrix is singular or numerically unusable.
    #[error("degenerate covariance")]
    DegenerateCovariance,

    /// Point or splat center is behind the near plane.
    #[error("behind camera: z = {z}")]
    BehindCamera { z: f64 },

    /// Screen-space footprint is not positive definite or too ill-conditioned;
    /// the splat is culled for this view.
    #[error("degenerate projection (splat culled)")]
    DegenerateProjection,

    /// Caller passed an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file does not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A file parsed but carries unusable values.
    #[error("data error at index {index}: {message}")]
    Data { index: usize, message: String },

    /// Operation requires state that was not produced (e.g. a backward pass
    /// without retained blend records).
    #[error("state error: {0}")]
    State(String),

    /// Optimization produced a non-finite loss.
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
