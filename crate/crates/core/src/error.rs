use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance is not symmetric: entries ({row},{col}) differ by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("unphysical state: minimum symplectic eigenvalue {min_eigenvalue} < 1")]
    Unphysical { min_eigenvalue: f64 },

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {field}: expected {constraint}, got {value}")]
    Invalid {
        field: String,
        constraint: String,
        value: String,
    },

    #[error("EPR factor {factor} is non-positive ({value}); closed form outside its validity domain")]
    EprFactor { factor: &'static str, value: f64 },

    #[error("at {freq_hz} Hz: {source}")]
    AtFrequency {
        freq_hz: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(
        field: impl Into<String>,
        constraint: impl Into<String>,
        value: impl std::fmt::Display,
    ) -> Self {
        Error::Invalid {
            field: field.into(),
            constraint: constraint.into(),
            value: value.to_string(),
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } | Error::NotPositiveDefinite => "validation",
            Error::Unphysical { .. } => "physicality",
            Error::NonPositive { .. } | Error::Invalid { .. } => "validation",
            Error::Domain(_) | Error::EprFactor { .. } => "domain",
            Error::AtFrequency { source, .. } => source.kind(),
            Error::Fit(_) => "fit",
            Error::ConfigParse { .. } => "parse",
            Error::Csv(_) => "csv",
            Error::Io { .. } => "io",
        }
    }
}
