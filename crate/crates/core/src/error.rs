use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation bound {bound:.3e} exceeds tolerance {tol:.3e} at n_max = {n_max}")]
    Truncation { bound: f64, tol: f64, n_max: usize },

    #[error("probe covers {found} scale block(s), need at least {needed}")]
    ProbeTooShallow { found: usize, needed: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Truncation { .. }
                | Error::ProbeTooShallow { .. }
                | Error::Precondition(_)
                | Error::Config(_)
        )
    }
}
