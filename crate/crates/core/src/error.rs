use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("infeasible link: {0}")]
    InfeasibleLink(String),

    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::InfeasibleGeometry(_) => "infeasible-geometry",
            Error::InfeasibleLink(_) => "infeasible-link",
            Error::InfeasibleTarget(_) => "infeasible",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "io",
        }
    }
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{p} is not a probability")))
    }
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} must be positive and finite")))
    }
}
