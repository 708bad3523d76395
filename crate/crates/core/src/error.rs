use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("covariate column {0} is identically zero")]
    DegenerateColumn(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("singular value decomposition failed to converge")]
    SvdFailure,

    #[error("ADMM iterate became non-finite at iteration {iteration}; try a different eta")]
    NonFiniteIterate { iteration: usize },

    #[error("requested rank {requested} exceeds min(n, T) = {max}")]
    RankTooLarge { requested: usize, max: usize },

    #[error("spectrum is identically zero")]
    AllZeroSpectrum,

    #[error("no grid point produced a converged fit")]
    AllFitsFailed,

    #[error("empty tuning grid")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, Error>;
