use thiserror::Error;

/// Errors raised by kernel evaluation, resummation and the PDE oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The requested time lies outside the sector where the series is known to converge.
    #[error("domain error: {0}")]
    Domain(String),

    /// A truncated expansion could not reach the requested tolerance.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// `sh(ωt)` vanishes (conjugate point of the harmonic oscillator).
    #[error("pole: |sh(ωt)| = {modulus:e} below tolerance")]
    Pole { modulus: f64 },

    /// A linear system needed by a Padé approximant is rank deficient.
    #[error("degenerate system: {0}")]
    Degenerate(String),

    /// The Laplace integral does not converge along the chosen ray.
    #[error("divergent Laplace integral: {0}")]
    Divergence(String),

    /// An integrability condition fails, so the requested constant is infinite.
    #[error("infinite integral: {0}")]
    Infinite(String),

    /// The measure is outside both admissible classes.
    #[error("inadmissible potential: {0}")]
    Inadmissible(String),

    /// The combination of inputs is valid mathematically but not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Short machine-readable tag, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Truncation(_) => "truncation",
            Error::Pole { .. } => "pole",
            Error::Degenerate(_) => "degenerate",
            Error::Divergence(_) => "divergence",
            Error::Infinite(_) => "infinite",
            Error::Inadmissible(_) => "inadmissible",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidInput(_) => "invalid_input",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
