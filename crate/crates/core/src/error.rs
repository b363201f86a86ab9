use thiserror::Error;

pub type Result<T> = std::result::Result<T, PfiError>;

#[derive(Debug, Error)]
pub enum PfiError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The ion cannot classically reach the requested position.
    #[error("nonphysical kinematics: kinetic energy {kinetic_ev:.6e} eV at L = {distance_nm:.6} nm")]
    NonphysicalKinematics { kinetic_ev: f64, distance_nm: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no sign change: {0}")]
    Bracket(String),

    #[error("value {value} outside curve range [{low}, {high}]")]
    Extrapolation { value: f64, low: f64, high: f64 },

    #[error("ambiguous inversion: {0}")]
    Ambiguity(String),

    #[error("fit target {target} unreachable, achievable interval [{low}, {high}]")]
    FitRange { target: f64, low: f64, high: f64 },

    #[error("degenerate column: {0}")]
    Degenerate(String),

    #[error("undefined CSR: {0}")]
    UndefinedCsr(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl PfiError {
    /// Prefix the message with the context in which the error occurred.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            PfiError::Numerical(m) => PfiError::Numerical(format!("{what}: {m}")),
            PfiError::Domain(m) => PfiError::Domain(format!("{what}: {m}")),
            PfiError::Config(m) => PfiError::Config(format!("{what}: {m}")),
            PfiError::Bracket(m) => PfiError::Bracket(format!("{what}: {m}")),
            other => other,
        }
    }
}
