use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix expected symmetric, asymmetry {asymmetry:.3e} exceeds tolerance")]
    Asymmetric { asymmetry: f64 },

    #[error("{what} is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { what: &'static str, min_eig: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{stage}: iteration limit reached after {iterations} Newton steps")]
    IterationLimit {
        stage: &'static str,
        iterations: usize,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("structure recovery failed: {0}")]
    StructureRecovery(String),

    #[error("infeasible structure: {0}")]
    Infeasible(String),

    #[error("spectral factorization did not converge: {0}")]
    Factorization(String),

    #[error("model generation failed: {0}")]
    Generation(String),

    #[error("every regularization path point failed")]
    AllPathPointsFailed,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure came from a numerical solver rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::IterationLimit { .. }
                | Error::NumericalBreakdown(_)
                | Error::Singular(_)
                | Error::StructureRecovery(_)
                | Error::Infeasible(_)
                | Error::Factorization(_)
                | Error::AllPathPointsFailed
        )
    }
}
