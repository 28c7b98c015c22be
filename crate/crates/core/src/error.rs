use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtocError {
    #[error("capacity exceeded: {what} = {requested}, limit is {limit}")]
    Capacity { what: &'static str, requested: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity that must be real by construction carried an imaginary part.
    #[error("internal consistency check failed: {what} has imaginary residual {residual:e}")]
    ImaginaryResidual { what: &'static str, residual: f64 },

    #[error("matrix is not real symmetric (max deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    Convergence { sweeps: usize, residual: f64 },

    #[error("ground state is degenerate (gap {gap:e}); zero-temperature state is ill-defined")]
    DegenerateGround { gap: f64 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no shots survived postselection at t = {t}")]
    PostselectionStarved { t: f64 },

    #[error("series has no entry at t = {t}")]
    MissingTimePoint { t: f64 },
}

impl OtocError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        OtocError::InvalidArgument(msg.into())
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            OtocError::ImaginaryResidual { .. } | OtocError::Convergence { .. } | OtocError::DegenerateGround { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, OtocError>;
