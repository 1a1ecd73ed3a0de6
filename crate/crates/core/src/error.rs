use num_complex::Complex64;
use thiserror::Error;

use crate::interconnect::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("system validation failed:\n{0}")]
    Validation(ValidationReport),

    /// The evaluation point lies (numerically) on the spectrum of `A`.
    #[error("s = {s} lies within {distance:e} of the spectrum of A")]
    Singular { s: Complex64, distance: f64 },

    #[error("block `{label}` is not exponentially stable (spectral abscissa {abscissa:e})")]
    NotStable { label: String, abscissa: f64 },

    /// No destabilizing construction exists (e.g. a vanishing spectral radius).
    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
