use thiserror::Error;

/// Errors produced by the spectrogram level-set pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or configuration failed validation.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: estimated error {error:e} exceeds {tolerance:e}")]
    Quadrature { error: f64, tolerance: f64 },

    /// Separated mode sampling gave up after too many rejections.
    #[error("mode sampling infeasible after {0} rejections")]
    Infeasible(usize),

    /// The level set was empty where a nonempty one was required.
    #[error("level set is empty")]
    EmptyLevelSet,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
