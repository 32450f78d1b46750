use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quantity that is positive analytically came out non-positive or
    /// exactly zero where it must be inverted.
    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    /// A derivative diverges at a rate boundary. `sign` is the sign of the
    /// divergence when approached from the interior.
    #[error("derivative of log p diverges ({sign:+}inf) at {boundary}")]
    Discontinuity { boundary: &'static str, sign: f64 },

    /// The quantity is not defined for this input (e.g. a derivative at the
    /// origin with j != i, or an estimator whose log argument is zero).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
