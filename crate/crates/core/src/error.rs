use crate::geom::Vec2;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tessellation is inconsistent: {0}")]
    Tessellation(String),

    #[error(
        "quadrature did not converge: estimate {estimate:?}, achieved error {achieved:e} > tolerance {tolerance:e}"
    )]
    Quadrature {
        estimate: Vec2,
        achieved: f64,
        tolerance: f64,
    },

    #[error("non-finite state at t = {time}: last good point ({}, {})", last.x, last.y)]
    NonFinite { time: f64, last: Vec2 },

    #[error("slope undefined: first coordinate is {value} at sample {index}")]
    SlopeUndefined { index: usize, value: f64 },

    #[error("degenerate field value ({}, {}): components must sum to a positive number", value.x, value.y)]
    DegenerateField { value: Vec2 },

    #[error("map is not invertible but {0} inverse iterations were requested")]
    NonInvertible(i64),

    #[error("malformed grid file: {0}")]
    GridFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
